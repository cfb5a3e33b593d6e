import numpy as np
import pytest

from cbcert import cbc, io
from cbcert.model import Certificate
from cbcert.poly import PolynomialVector, parse_polynomial


@pytest.fixture(scope="session")
def lti():
    return io.load_problem("lti_unstable.json")[0]


@pytest.fixture(scope="session")
def nonlinear():
    return io.load_problem("nonlinear_affine.json")[0]


@pytest.fixture(scope="session")
def printed_cert() -> Certificate:
    return io.load_certificate("lti_paper_certificate.json")[0]


@pytest.fixture(scope="session")
def lti_synth(lti):
    return cbc.synthesize(lti)


@pytest.fixture(scope="session")
def nonlinear_synth(nonlinear):
    return cbc.synthesize(nonlinear)


@pytest.fixture(scope="session")
def comparison():
    problem, _ = io.load_problem("nonlinear_affine_cbf.json")
    return problem, cbc.compare(problem)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def P(text, n=2):
    return parse_polynomial(text, n)


def PV(texts, n=2):
    return PolynomialVector([parse_polynomial(t, n) for t in texts], n)
