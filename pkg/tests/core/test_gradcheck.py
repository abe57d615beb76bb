import pytest

from taylornet.exceptions import ConfigError
from taylornet.gradcheck import COMPONENTS, GradcheckReport, gradcheck


@pytest.mark.parametrize("component", sorted(COMPONENTS))
def test_registered_components_pass(component):
    report = gradcheck(component, tolerance=1e-4)
    assert report.passed, report.describe()
    assert report.errors


def test_moment_loss_on_seven_point_filters():
    report = gradcheck("moment_loss", (3, 7, 7), tolerance=1e-5)
    assert report.passed, report.describe()


def test_moment_loss_on_three_point_filters():
    assert gradcheck("moment_loss", (5, 3, 3), tolerance=1e-5).passed


def test_linear_function_is_exact():
    assert gradcheck("linear", (10,)).max_error < 1e-8


def test_unknown_component():
    with pytest.raises(ConfigError, match="Unknown gradcheck component"):
        gradcheck("encoder")


def test_report():
    report = GradcheckReport("x", 1e-4, {"a": 1e-6, "b": 2e-3})
    assert report.max_error == 2e-3
    assert not report.passed
    assert "b: 2.000e-03" in report.describe()
    assert GradcheckReport("empty", 1e-4).passed
