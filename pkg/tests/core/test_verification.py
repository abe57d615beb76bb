from taylornet.core.models import CheckResult
from taylornet.moment_kernels import exact_derivative_bank
from taylornet.verification import check_derivative_oracle, check_moment_fit


class TestVerificationChecks:
    def test_small_bank_fit(self):
        results, fitted = check_moment_fit(3, steps=300)
        assert fitted.shape == (9, 3, 3)
        assert all(result.passed for result in results), [r.describe() for r in results]

    def test_oracle_on_exact_filters(self):
        results = check_derivative_oracle(exact_derivative_bank(7))
        assert len(results) == 2
        assert all(result.passed for result in results), [r.describe() for r in results]

    def test_oracle_rejects_a_wrong_filter(self):
        bank = exact_derivative_bank(7)
        bank[7] = bank[0]
        results = check_derivative_oracle(bank)
        assert not results[0].passed


def test_describe():
    assert CheckResult("fit", 1e-8, 1e-6, True).describe() == "[ok] fit: 1.000e-08 (tolerance 1.0e-06)"
    assert CheckResult("fit", 1.0, 1e-6, False).describe().startswith("[FAIL]")
