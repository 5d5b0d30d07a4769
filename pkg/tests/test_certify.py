import warnings
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poisoncert.certify import (
    ABSTAIN,
    Certificate,
    PoisoningModel,
    UncertifiableWarning,
    VoteRecord,
    accuracy_curve,
    certified_accuracy,
    certified_radius,
    certify_prediction,
    configurations,
    curve_from_certificates,
    delta,
    delta_exact,
)
from poisoncert.schemes import (
    Binomial,
    WithoutReplacement,
    WithReplacement,
    miss_probability,
    pi_ratio,
)

P1, P2, P3, P4, P5, P6 = PoisoningModel


def scalar_delta(scheme, model, n, rho):
    """Independent route: the scalar pi and miss operations, looped over the m-range."""
    best = 0.0
    for m in model.m_range(n, rho):
        if model is P1:
            val = miss_probability(scheme, m, n) / pi_ratio(scheme, n, m)
        elif model is P2:
            val = miss_probability(scheme, n, m)
        else:
            omega = max(m, n) - rho
            val = miss_probability(scheme, n, omega) + miss_probability(scheme, m, omega) / pi_ratio(scheme, n, m)
        best = max(best, val)
    return min(best, 2.0)


class TestPoisoningModel:
    @pytest.mark.parametrize("model,expected", [(P1, (10, 13)), (P4, (10, 13)), (P2, (7, 10)),
                                                (P5, (7, 10)), (P3, (10, 10)), (P6, (7, 13))])
    def test_m_range(self, model, expected):
        r = model.m_range(10, 3)
        assert (r[0], r[-1]) == expected

    def test_parse(self):
        assert PoisoningModel.parse("p6") is P6
        assert PoisoningModel.parse("insert") is P1
        with pytest.raises(ValueError):
            PoisoningModel.parse("P7")

    def test_deletion_cannot_empty(self):
        with pytest.raises(ValueError):
            configurations(P2, 4, 4)
        configurations(P3, 4, 4)


class TestDelta:
    @pytest.mark.parametrize("scheme", [WithoutReplacement(3), WithReplacement(3), Binomial(0.2)])
    @pytest.mark.parametrize("model", list(PoisoningModel))
    def test_zero_intensity(self, scheme, model):
        assert delta(scheme, model, 10, 0) == 0

    @pytest.mark.parametrize("scheme,model,expected", [
        (WithReplacement(2), P3, Fraction(7, 8)),
        (WithoutReplacement(2), P3, Fraction(1)),
        (WithReplacement(2), P1, Fraction(9, 16)),
        (WithReplacement(2), P2, Fraction(7, 16)),
    ])
    def test_enumerated_examples(self, scheme, model, expected):
        assert delta(scheme, model, 4, 1) == pytest.approx(float(expected), abs=1e-12)
        assert delta_exact(scheme, model, 4, 1) == expected

    def test_large_scale_against_scalar_route(self):
        for scheme in (WithoutReplacement(10), WithReplacement(10), Binomial(10 / 13007)):
            for model in PoisoningModel:
                for rho in (1, 7, 100, 500):
                    assert delta(scheme, model, 13007, rho) == pytest.approx(
                        scalar_delta(scheme, model, 13007, rho), rel=1e-9, abs=1e-12)

    def test_exact_matches_float_small(self):
        for scheme in (WithoutReplacement(2), WithReplacement(3), Binomial(0.25)):
            for model in PoisoningModel:
                for rho in range(4):
                    exact = delta_exact(scheme, model, 6, rho)
                    assert delta(scheme, model, 6, rho) == pytest.approx(float(exact), abs=1e-12)

    def test_unsampleable_is_uncertifiable(self):
        with pytest.warns(UncertifiableWarning):
            assert delta(WithoutReplacement(5), P2, 6, 2) == 2.0
        assert delta_exact(WithoutReplacement(5), P2, 6, 2) == 2

    def test_rejects_small_dataset(self):
        with pytest.raises(ValueError):
            delta(WithoutReplacement(5), P3, 4, 1)

    def test_scheme_ordering(self):
        n = 13007
        d = [delta(s, P6, n, 500) for s in (Binomial(10 / n), WithReplacement(10), WithoutReplacement(10))]
        assert d[0] < d[1] < d[2]

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(20, 3000), k=st.integers(1, 15), rho=st.integers(0, 60),
           kind=st.sampled_from(["without", "with", "binomial"]))
    def test_model_dominance(self, n, k, rho, kind):
        scheme = {"without": WithoutReplacement(k), "with": WithReplacement(k),
                  "binomial": Binomial(k / n)}[kind]
        rho = min(rho, n - k - 1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UncertifiableWarning)
            d = {m: delta(scheme, m, n, rho) for m in PoisoningModel}
        tol = 1e-12
        assert d[P1] <= d[P4] + tol and d[P4] <= d[P6] + tol
        assert d[P2] <= d[P5] + tol and d[P5] <= d[P6] + tol
        assert d[P3] <= d[P4] + tol and d[P3] <= d[P5] + tol

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(20, 3000), k=st.integers(1, 15),
           model=st.sampled_from(list(PoisoningModel)),
           kind=st.sampled_from(["without", "with", "binomial"]))
    def test_nondecreasing_in_rho(self, n, k, model, kind):
        scheme = {"without": WithoutReplacement(k), "with": WithReplacement(k),
                  "binomial": Binomial(k / n)}[kind]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UncertifiableWarning)
            vals = [delta(scheme, model, n, r) for r in range(0, min(40, n - 1))]
        assert vals[0] == 0
        assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
        assert all(0 <= v <= 2 for v in vals)


class TestCertifiedRadius:
    def test_zero_margin(self):
        assert certified_radius(WithReplacement(10), P6, 1000, 0.0, 1000) == 0

    def test_negative_margin(self):
        assert certified_radius(WithReplacement(10), P6, 1000, -0.1, 1000) == ABSTAIN

    def test_linear_scan_example(self):
        s = WithReplacement(50)
        assert delta(s, P3, 1000, 5) == pytest.approx(2 * (1 - 0.995 ** 50), rel=1e-12)
        scan = max(r for r in range(0, 200) if delta(s, P3, 1000, r) <= 0.5)
        assert scan == 5
        assert certified_radius(s, P3, 1000, 0.5, 1000) == 5

    def test_rho_cap(self):
        assert certified_radius(WithReplacement(10), P6, 13007, 0.99, 10) == 10

    def test_boundary_is_certified(self):
        s, n = WithReplacement(10), 500
        d = delta(s, P6, n, 17)
        assert certified_radius(s, P6, n, d, n) >= 17

    @settings(max_examples=60, deadline=None)
    @given(margin=st.floats(0, 1), extra=st.floats(0, 0.5), k=st.integers(1, 40),
           model=st.sampled_from(list(PoisoningModel)))
    def test_radius_brackets_margin(self, margin, extra, k, model):
        s, n = WithReplacement(k), 800
        r = certified_radius(s, model, n, margin, n)
        assert delta(s, model, n, r) <= margin
        if r < model.max_rho(n) if model.max_rho(n) is not None else True:
            assert delta(s, model, n, r + 1) > margin
        assert certified_radius(s, model, n, min(1.0, margin + extra), n) >= r


class TestCertifyPrediction:
    def test_tie_abstains(self):
        c = certify_prediction(VoteRecord("x", {0: 500, 1: 500}, 1000), 0.001,
                               WithReplacement(10), P6, 13007, 13007)
        assert c.label == ABSTAIN and c.radius == ABSTAIN and c.abstained

    def test_ideal_votes(self):
        c = certify_prediction(VoteRecord("x", {4: 1000}, 1000), 0.001,
                               WithReplacement(10), P6, 13007, 13007)
        assert c.label == 4
        assert abs(c.radius - 857) <= 20
        assert c.radius == 852  # frozen from the closed-form scan
        assert c.p1_lower == pytest.approx(0.0005 ** (1 / 1000), abs=1e-9)
        assert c.p2_upper == pytest.approx(1 - c.p1_lower, abs=1e-12)

    def test_small_trial_count(self):
        for scheme in (WithoutReplacement(2), WithReplacement(2), Binomial(0.3)):
            c = certify_prediction(VoteRecord("x", {2: 3}, 3), 0.5, scheme, P6, 10, 0)
            assert (c.label, c.radius) == (2, 0)

    def test_runner_up_uses_upper_bound(self):
        c = certify_prediction(VoteRecord("x", {0: 900, 1: 60, 2: 40}, 1000), 0.01,
                               WithReplacement(10), P6, 5000, 5000)
        assert c.label == 0
        assert c.p2_upper > 60 / 1000
        assert c.p1_lower + c.p2_upper <= 1

    def test_certificate_is_maximal(self):
        s, n = WithReplacement(10), 2000
        c = certify_prediction(VoteRecord("x", {0: 980, 1: 20}, 1000), 0.001, s, P6, n, n)
        assert delta(s, P6, n, c.radius) <= c.margin < delta(s, P6, n, c.radius + 1)

    def test_no_votes_abstains(self):
        c = certify_prediction(VoteRecord("x", {}, 5), 0.1, WithReplacement(2), P6, 10, 10)
        assert c.abstained

    def test_bad_alpha(self):
        with pytest.raises(ValueError):
            certify_prediction(VoteRecord("x", {0: 5}, 5), 1.5, WithReplacement(2), P6, 10, 10)

    def test_vote_record_validation(self):
        with pytest.raises(ValueError):
            VoteRecord("x", {0: 4, 1: 2}, 5)
        with pytest.raises(ValueError):
            VoteRecord("x", {0: -1}, 5)

    def test_ranking_ties_by_class_id(self):
        v = VoteRecord("x", {3: 1, 1: 1}, 2)
        assert v.majority == 1
        assert v.ranked() == [(1, 1), (3, 1)]


def _records():
    # ideal votes certify a large radius; weaker votes certify less
    return [
        VoteRecord("a", {0: 1000}, 1000, true_label=0),
        VoteRecord("b", {1: 990, 0: 10}, 1000, true_label=1),
        VoteRecord("c", {0: 600, 1: 400}, 1000, true_label=1),
        VoteRecord("d", {1: 500, 0: 500}, 1000, true_label=0),
        VoteRecord("e", {2: 950, 1: 50}, 1000, true_label=2),
    ]


class TestAccuracy:
    scheme = WithReplacement(10)
    n = 5000

    def test_all_abstain(self):
        recs = [VoteRecord(str(i), {0: 5, 1: 5}, 10, true_label=0) for i in range(4)]
        assert certified_accuracy(recs, 0, 0.01, self.scheme, P6, self.n) == 0

    def test_indicator_arithmetic(self):
        certs = [Certificate("a", 0, 5, 0.9, 0.1, 0), Certificate("b", 1, 2, 0.9, 0.1, 1),
                 Certificate("c", ABSTAIN, ABSTAIN, 0.4, 0.6, 1)]
        assert curve_from_certificates(certs, [3]) == [(3, pytest.approx(1 / 3))]

    def test_rho_zero_is_majority_accuracy(self):
        recs = _records()
        got = certified_accuracy(recs, 0, 0.001, self.scheme, P6, self.n)
        # "c" predicts 0 wrongly, "d" abstains
        assert got == pytest.approx(3 / 5)

    def test_single_record_curve(self):
        certs = [Certificate("a", 1, 5, 0.9, 0.1, 1)]
        curve = curve_from_certificates(certs, range(11))
        assert [ca for _, ca in curve] == [1.0] * 6 + [0.0] * 5

    def test_curve_matches_pointwise(self):
        recs = _records()
        grid = list(range(0, 400, 37))
        curve = accuracy_curve(recs, grid, 0.001, self.scheme, P6, self.n)
        for rho, ca in curve:
            assert ca == certified_accuracy(recs, rho, 0.001, self.scheme, P6, self.n)
        vals = [ca for _, ca in curve]
        assert all(b <= a for a, b in zip(vals, vals[1:]))

    def test_errors(self):
        with pytest.raises(ValueError):
            accuracy_curve([], [0, 1], 0.001, self.scheme, P6, self.n)
        with pytest.raises(ValueError):
            accuracy_curve(_records(), [-1, 0], 0.001, self.scheme, P6, self.n)
        with pytest.raises(ValueError):
            certified_accuracy([VoteRecord("x", {0: 3}, 3)], 0, 0.1, self.scheme, P6, self.n)
