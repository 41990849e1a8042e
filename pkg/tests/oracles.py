"""Independent high-precision reference evaluations used across the tests."""
import mpmath


def secrecy_mp(q, i_ae, dps=50):
    """Secrecy efficiency in arbitrary precision, coded straight from the formula."""
    mpmath.mp.dps = dps
    q = mpmath.mpf(q)
    i_ae = mpmath.mpf(i_ae)
    qlog = q * mpmath.log(q, 2) if q > 0 else mpmath.mpf(0)
    rlog = (1 - q) * mpmath.log(1 - q, 2)
    return 1 + qlog - mpmath.mpf("3.5") * q - i_ae * (1 - rlog - mpmath.mpf("3.5") * q)


def threshold_mp(i_ae):
    mpmath.mp.dps = 50
    return float(mpmath.findroot(lambda q: secrecy_mp(q, i_ae), (mpmath.mpf("1e-9"), 0.5),
                                 solver="anderson"))
