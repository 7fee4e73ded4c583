import pytest

from kinetic_cocycles.baseflow import CircleRotation, RoofFunction, SuspensionFlow, TorusCatMap


@pytest.fixture
def circle():
    return SuspensionFlow(CircleRotation(), RoofFunction(3.0))


@pytest.fixture
def torus():
    return SuspensionFlow(TorusCatMap(), RoofFunction(3.0))


@pytest.fixture
def wavy():
    return SuspensionFlow(CircleRotation(), RoofFunction(3.0, 0.5))
