"""Shared fixtures: the worked 2-D deadlock problem, the bundled scenarios,
the adversarial duplicated-barrier scenario, and small synthetic problems
used across the suite."""
import sys
from pathlib import Path

import numpy as np
import pytest

from clfcbf import (
    CertificateSet,
    ClassKappa,
    ControlProblem,
    ControllerParams,
    DynamicsModel,
    NominalController,
    QuadraticCertificate,
    Tolerances,
    load_bundled_scenario,
    load_scenario,
)

DATA_DIR = Path(__file__).parent / "data"


def make_deadlock2d():
    """Single integrator in the plane, V = 0.5*||x||^2, one circular obstacle
    of radius 1 at (2, 0), unit gains, p = 1.  All frozen numbers in the
    suite's hand derivations refer to this problem."""
    model = DynamicsModel.driftless(input_matrix=np.eye(2))
    certificates = CertificateSet(
        cbfs=(
            QuadraticCertificate.barrier(
                shape=np.eye(2), center=np.array([2.0, 0.0]), offset=-1.0
            ),
        ),
        alphas=(ClassKappa(1.0),),
        clf=QuadraticCertificate.clf(shape=0.5 * np.eye(2), center=np.zeros(2)),
        gamma=ClassKappa(1.0),
    )
    params = ControllerParams(
        mode="clf_cbf", p=1.0, cost_metric=np.eye(2), nominal=NominalController.zero(2)
    )
    return ControlProblem(
        model=model, certificates=certificates, params=params, tolerances=Tolerances()
    )


def make_onedim_filter():
    """Scalar safety filter: f = 0, g = 1, u_nom = -x, quadratic barrier
    h(x) = 0.5*(x - 0.5)^2 whose value (0.5) and gradient (1.0) at the probe
    state x = 1.5 match the affine constraint the example was derived from."""
    model = DynamicsModel.driftless(input_matrix=np.eye(1))
    certificates = CertificateSet(
        cbfs=(
            QuadraticCertificate.barrier(
                shape=np.array([[0.5]]), center=np.array([0.5]), offset=0.0
            ),
        ),
        alphas=(ClassKappa(1.0),),
    )
    params = ControllerParams(
        mode="safety_filter",
        p=1.0,
        cost_metric=np.eye(1),
        nominal=NominalController.linear_feedback(-np.eye(1)),
    )
    return ControlProblem(
        model=model, certificates=certificates, params=params, tolerances=Tolerances()
    )


def make_twocircles2d():
    """Two radius-sqrt(2) circles centered (+-1, 0) meeting transversally at
    (0, +-1): at either crossing both gradients are independent, so an
    equilibrium there has r = n = 2 active constraints."""
    model = DynamicsModel.driftless(input_matrix=np.eye(2))
    certificates = CertificateSet(
        cbfs=(
            QuadraticCertificate.barrier(
                shape=0.5 * np.eye(2), center=np.array([-1.0, 0.0]), offset=-1.0
            ),
            QuadraticCertificate.barrier(
                shape=0.5 * np.eye(2), center=np.array([1.0, 0.0]), offset=-1.0
            ),
        ),
        alphas=(ClassKappa(1.0), ClassKappa(2.0)),
        clf=QuadraticCertificate.clf(shape=0.5 * np.eye(2), center=np.zeros(2)),
        gamma=ClassKappa(1.0),
    )
    params = ControllerParams(
        mode="clf_cbf", p=1.0, cost_metric=np.eye(2), nominal=NominalController.zero(2)
    )
    return ControlProblem(
        model=model, certificates=certificates, params=params, tolerances=Tolerances()
    )


@pytest.fixture(scope="session")
def deadlock2d():
    return make_deadlock2d()


@pytest.fixture(scope="session")
def onedim_filter():
    return make_onedim_filter()


@pytest.fixture(scope="session")
def twocircles2d():
    return make_twocircles2d()


@pytest.fixture(scope="session")
def fig1_scenario():
    return load_bundled_scenario("fig1")


@pytest.fixture(scope="session")
def fig1(fig1_scenario):
    return fig1_scenario.problem()


@pytest.fixture(scope="session")
def deadlock2d_scenario():
    return load_bundled_scenario("deadlock2d")


@pytest.fixture(scope="session")
def filter2d_scenario():
    return load_bundled_scenario("filter2d")


@pytest.fixture(scope="session")
def filter2d(filter2d_scenario):
    return filter2d_scenario.problem()


@pytest.fixture(scope="session")
def dupcbf_scenario():
    # Adversarial duplicated-barrier scenario: ships with the tests, not
    # with the package, because its boundary equilibrium sits on an
    # active-set kink where the closed loop is not differentiable.
    return load_scenario(DATA_DIR / "dupcbf.scenario")


@pytest.fixture(scope="session")
def dupcbf(dupcbf_scenario):
    return dupcbf_scenario.problem()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "SUMMARY", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
