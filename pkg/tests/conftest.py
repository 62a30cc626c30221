import numpy as np
import pytest
from hypothesis import settings

from tiltmirror.geometry import SensorRig
from tiltmirror.scene import SceneModel, calibration_scene, default_mirror

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def bare_scene():
    sensor = SensorRig()
    return SceneModel(boxes=[], mirror=default_mirror(sensor), sensor=sensor, height_threshold=0.3)


@pytest.fixture
def calib_scene():
    return calibration_scene()


_RESULTS = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one acceptance criterion outcome; printed in the terminal summary."""
    results = request.config.stash.setdefault(_RESULTS, {})

    def report(number, ok, detail):
        results[number] = (bool(ok), detail)
        with request.config.pluginmanager.get_plugin("capturemanager").global_and_fixture_disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
