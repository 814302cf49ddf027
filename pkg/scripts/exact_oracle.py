"""Exact rational values of the single-spike covariance at w = v_1 = e_1, used to freeze predictor tests.

Computed symbolically along the Green-function route, independently of the numeric code.
"""
import sympy as sp
d,y,z,m=sp.symbols('d y z m')
def mfun(a):
    qa,qb = (y,y-1) if a==1 else (1,1-y)
    return (-(z+qb)+sp.sqrt((z+qb)**2-4*qa*z))/(2*qa*z)
for D,Y in [(2,sp.Rational(1,2)),(2,1),(3,sp.Rational(1,2))]:
    th = 1+D+Y+Y/D
    m1=mfun(1).subs(y,Y); m2=mfun(2).subs(y,Y)
    zm1=z*m1
    a1=(m1**2*sp.diff(zm1,z)).subs(z,th)
    a1p=sp.diff(m1**2*sp.diff(zm1,z),z).subs(z,th)
    a2=(m1*sp.diff(m1,z)*sp.diff(zm1,z,2)+sp.diff(m1,z)**2*sp.diff(zm1,z)+m1**2*sp.diff(zm1,z,3)/6).subs(z,th)
    a3=(z*m2*m1**2).subs(z,th); a4=sp.diff(z*m2*m1**2,z).subs(z,th)
    a1,a1p,a2,a3,a4=[sp.nsimplify(sp.simplify(v)) for v in (a1,a1p,a2,a3,a4)]
    # w = v1 = e1, r=1: chi vector (chi11, chi_u, chi'); u=0, s4(v)=1
    q=D*D-Y; f=(D+1)*q/D
    cu=[-q*th,0,0]; ct=[-2*D*(D+1)**sp.Rational(3,2)/sp.sqrt(1+D), -2*f/sp.sqrt(1+D), -f*f/sp.sqrt(1+D)/sp.sqrt(1+D)]
    Mm=sp.Matrix([[2*a1,0,a1p],[0,0,0],[a1p,0,2*a2]])
    K=sp.Matrix([[a3**2,0,a3*a4],[0,0,0],[a3*a4,0,a4**2]])
    C=sp.Matrix([cu,ct])
    G=sp.simplify(C*Mm*C.T); KK=sp.simplify(C*K*C.T)
    print((D,Y),"m1",sp.nsimplify(m1.subs(z,th)),"facts",a1,a1p,a2,a3,a4)
    print("  gauss",list(G),"quartic",list(KK))
