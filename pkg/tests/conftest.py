import pytest

from ssfilter.problem import benchmark_problem, polynomial_case_problem


@pytest.fixture(scope="session")
def bench():
    return benchmark_problem()


@pytest.fixture(scope="session")
def poly_case():
    return polynomial_case_problem()
