import numpy as np
import pytest

from mlqswitch.closed_form import Example43Params, Scalar1DParams

# interior optimum, used for the sensitivity and certificate checks
CERTIFICATE = Scalar1DParams(A1=1, B1=2, C1=0, D1=0, Q1=1, R1=1, G1=0,
                             A2=1, B2=1, C2=0, D2=0, Q2=0, R2=1, G2=0.5, K=1, T=1)
NOISY = Scalar1DParams(A1=0, B1=1, C1=0.3, D1=0, Q1=1, R1=1, G1=0,
                       A2=0, B2=1, C2=0.2, D2=0, Q2=1, R2=1, G2=1, K=1, T=1)
# phi(r) = r x1^2: running cost before the switch, nothing after
PURE_QUADRATURE = Scalar1DParams(A1=0, B1=0, C1=0, D1=0, Q1=1, R1=1, G1=0,
                                 A2=0, B2=0, C2=0, D2=0, Q2=0, R2=1, G2=0, K=1, T=1)
EX43 = Example43Params(a=0.0, g=1.0, g1=1.0, T=1.0)

SCALAR_SUITE = {
    "certificate": CERTIFICATE,
    "noisy": NOISY,
    "pure_quadrature": PURE_QUADRATURE,
    "control_weighted": Scalar1DParams(A1=-0.5, B1=1, C1=0.1, D1=0.2, Q1=2, R1=0.5, G1=0.3,
                                       A2=0.4, B2=0.7, C2=0.3, D2=0.1, Q2=0.5, R2=2, G2=1.5,
                                       K=0.8, T=2),
}

_ACCEPTANCE_LINES = []


def record_acceptance(line):
    _ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
