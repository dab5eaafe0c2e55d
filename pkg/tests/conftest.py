"""Pytest configuration and shared fixtures."""

import tempfile
from pathlib import Path

import pytest

from cavity_subfields.detector import DetectorModel, Smearing, Switching
from cavity_subfields.geometry import CrossSection
from cavity_subfields.response import FieldState, Scenario
from cavity_subfields.storage import RunStore
from cavity_subfields.subfields import CavityField


@pytest.fixture(autouse=True)
def isolated_env(tmp_path, monkeypatch):
    """Keep the run index and output directory of every test inside tmp_path."""
    monkeypatch.setenv("CAVITY_SUBFIELDS_DB", str(tmp_path / "runs.db"))
    monkeypatch.setenv("CAVITY_SUBFIELDS_OUT", str(tmp_path / "out"))
    monkeypatch.delenv("CAVITY_SUBFIELDS_THREADS", raising=False)
    monkeypatch.delenv("DEV_MODE", raising=False)


@pytest.fixture
def store():
    """Empty run index in a temporary directory."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield RunStore(Path(tmpdir) / "test.db")


@pytest.fixture
def unit_square():
    return CrossSection.rectangle(1.0, 1.0)


@pytest.fixture
def unit_disk():
    return CrossSection.disk(1.0)


def make_box_scenario(
    y0=(2.0, 2.0),
    sigma=0.3,
    gap=2.0,
    T=2.0,
    state=None,
    initial_state="excited",
    switching="gaussian",
):
    """Small Dirichlet box cavity (4 x 4 x 20) whose mode sums converge in well under a second."""
    cs = CrossSection.rectangle(4.0, 4.0)
    cavity = CavityField(cross_section=cs, axial_length=20.0)
    detector = DetectorModel(
        gap=gap,
        smearing=Smearing.gaussian(sigma, y0, 10.0),
        switching=Switching(switching, T),
        initial_state=initial_state,
    )
    return Scenario(cavity=cavity, detector=detector, state=state or FieldState.vacuum())


def make_disk_scenario(r0=0.0, phi0=0.0, sigma=0.05, gap=3.0, T=2.0, length=20.0, pointlike=False):
    """Unit-radius cylinder with a short axis."""
    cavity = CavityField(cross_section=CrossSection.disk(1.0), axial_length=length)
    if pointlike:
        smearing = Smearing.pointlike((r0, 0.0), length / 2)
    else:
        smearing = Smearing.gaussian_polar(sigma, r0, phi0, length / 2)
    detector = DetectorModel(gap=gap, smearing=smearing, switching=Switching("gaussian", T))
    return Scenario(cavity=cavity, detector=detector)


@pytest.fixture
def box_scenario():
    """Centred Gaussian detector in the small box, vacuum field."""
    return make_box_scenario()


@pytest.fixture
def offcentre_box_scenario():
    """Detector away from every symmetry plane of the small box."""
    return make_box_scenario(y0=(1.3, 2.1))


@pytest.fixture
def disk_scenario():
    return make_disk_scenario()


SQUARE_YAML = """\
name: square
units:
  length_unit: sigma
geometry:
  shape: rectangle
  lengths: [4.0, 4.0]
  boundary: dirichlet
  L: 20.0
field:
  state: vacuum
detector:
  gap: 2.0
  smearing: gaussian
  sigma: 0.3
  switching: gaussian
  T: 2.0
  initial_state: excited
numerics:
  ordering: ascending_mass
"""


@pytest.fixture
def square_config_path(tmp_path):
    """YAML scenario for the small box cavity."""
    path = tmp_path / "square.yaml"
    path.write_text(SQUARE_YAML, encoding="utf-8")
    return path


@pytest.fixture
def box_factory():
    """make_box_scenario, for tests that vary its parameters."""
    return make_box_scenario


@pytest.fixture
def disk_factory():
    return make_disk_scenario
