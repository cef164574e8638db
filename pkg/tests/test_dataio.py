import io
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import trapezoid

from selbias import NormalPrior, StudyEstimate, ValidationError, pos_large
from selbias.dataio import (
    FIGURES,
    PortfolioParseError,
    emit_plot_data,
    parse_estimates,
    parse_portfolio,
    pool_fixed_effect,
    read_plot_table,
    write_plot_table,
    write_portfolio,
)

FIXTURES = Path(__file__).parent / "fixtures"
HEADER = "compound_id,study_id,phase,estimate,std_error\n"


def parse_text(text):
    return parse_portfolio(io.StringIO(text))


# -- parse_portfolio ----------------------------------------------------------


class TestParsePortfolio:
    def test_two_rows_one_compound(self):
        pf = parse_text(HEADER + "A,s1,phase2,0.3,0.1\nA,s2,phase2,0.1,0.2\n")
        assert pf.n_compounds == 1
        assert list(pf.study_counts()) == [2]
        st1, st2 = pf.compounds[0].studies
        assert (st1.label, st1.phase, st1.estimate, st1.std_error) == ("s1", "phase2", 0.3, 0.1)
        assert st2.label == "s2"

    def test_row_order_and_grouping(self):
        pf = parse_text(HEADER + "B,x,p,1,1\nA,y,p,2,1\nB,z,p,3,1\n")
        assert pf.compound_ids == ["B", "A"]
        assert [s.estimate for s in pf.compounds[0].studies] == [1.0, 3.0]

    def test_ra_fixture(self):
        pf = parse_portfolio(FIXTURES / "ra_like.csv")
        lines = (FIXTURES / "ra_like.csv").read_text().splitlines()[1:]
        assert len(lines) == 48
        assert pf.n_studies == 48
        assert pf.n_compounds == len({ln.split(",")[0] for ln in lines})

    def test_zero_std_error_names_line(self):
        with pytest.raises(PortfolioParseError, match="line 3") as exc:
            parse_text(HEADER + "A,s1,p,0.3,0.1\nA,s2,p,0.1,0\n")
        assert len(exc.value.problems) == 1

    def test_collects_every_problem(self):
        text = HEADER + (
            "A,s1,p,0.3,0.1\n"
            ",s2,p,0.1,0.2\n"          # line 3 missing compound
            "A,s3,p,abc,0.2\n"         # line 4 non-numeric
            "A,s4,p,0.1,-1\n"          # line 5 negative se
            "A,s1,p,0.2,0.1\n"         # line 6 duplicate
            "A,s5,p,0.2\n"             # line 7 short row
            "A,s6,p,,0.1\n"            # line 8 missing estimate
        )
        with pytest.raises(PortfolioParseError) as exc:
            parse_text(text)
        joined = "\n".join(exc.value.problems)
        for n in range(3, 9):
            assert f"line {n}:" in joined
        assert "duplicate" in joined

    @pytest.mark.parametrize("value", ["0,3", "1,000.5", "nan", "inf", "1e400", "0x1p3", "1_0"])
    def test_locale_and_special_numbers_rejected(self, value):
        with pytest.raises(PortfolioParseError):
            parse_text(HEADER + f'A,s1,p,"{value}",0.1\n')

    @pytest.mark.parametrize("value, expected", [("-.5", -0.5), ("+2.", 2.0), ("1.5E-3", 0.0015)])
    def test_decimal_forms(self, value, expected):
        pf = parse_text(HEADER + f"A,s1,p,{value},0.1\n")
        assert pf.compounds[0].studies[0].estimate == expected

    def test_bad_header(self):
        with pytest.raises(PortfolioParseError, match="line 1"):
            parse_text("compound,study,phase,estimate,se\nA,s,p,1,1\n")

    def test_empty(self):
        with pytest.raises(PortfolioParseError):
            parse_text("")
        with pytest.raises(PortfolioParseError):
            parse_text(HEADER)

    def test_is_validation_error(self):
        assert issubclass(PortfolioParseError, ValidationError)

    def test_round_trip(self, tmp_path):
        pf = parse_portfolio(FIXTURES / "ra_like.csv")
        out = tmp_path / "pf.csv"
        write_portfolio(pf, out)
        assert parse_portfolio(out) == pf
        buf = io.StringIO()
        write_portfolio(pf, buf)
        assert parse_text(buf.getvalue()) == pf

    @given(st.lists(
        st.tuples(st.sampled_from(["a", "b", "c"]),
                  st.floats(-1e6, 1e6, allow_nan=False),
                  st.floats(1e-6, 1e3)),
        min_size=1, max_size=20,
    ))
    def test_round_trip_property(self, rows):
        buf = io.StringIO()
        buf.write(HEADER)
        for k, (cid, est, se) in enumerate(rows):
            buf.write(f"{cid},s{k},ph,{est!r},{se!r}\n")
        pf = parse_text(buf.getvalue())
        out = io.StringIO()
        write_portfolio(pf, out)
        assert parse_text(out.getvalue()) == pf


class TestParseEstimates:
    def test_basic(self):
        ests = parse_estimates(io.StringIO("study_id,estimate,std_error\na,0.3,0.1\nb,0.1,0.1\n"))
        assert [e.label for e in ests] == ["a", "b"]

    def test_missing_column(self):
        with pytest.raises(PortfolioParseError):
            parse_estimates(io.StringIO("estimate\n0.3\n"))

    def test_bad_row(self):
        with pytest.raises(PortfolioParseError, match="line 3"):
            parse_estimates(io.StringIO("estimate,std_error\n0.3,0.1\n0.2,0\n"))


# -- pooling ------------------------------------------------------------------


class TestPooling:
    def test_equal_weights(self):
        p = pool_fixed_effect([StudyEstimate(0.3, 0.1), StudyEstimate(0.1, 0.1)])
        assert p.estimate == pytest.approx(0.2, abs=1e-15)
        assert p.std_error == pytest.approx(0.070711, abs=5e-7)

    def test_single_unchanged(self):
        e = StudyEstimate(0.42, 0.07, label="x")
        assert pool_fixed_effect([e]) is e

    def test_hand_weights(self):
        p = pool_fixed_effect([StudyEstimate(0.3, 0.1), StudyEstimate(0.1, 0.2)])
        assert p.estimate == pytest.approx(0.26, abs=1e-15)
        assert p.std_error == pytest.approx(0.089443, abs=5e-7)

    def test_empty(self):
        with pytest.raises(ValidationError):
            pool_fixed_effect([])

    @given(st.lists(st.tuples(st.floats(-10, 10), st.floats(0.01, 10)), min_size=1, max_size=12),
           st.randoms())
    def test_permutation_invariant(self, pairs, rnd):
        ests = [StudyEstimate(e, s) for e, s in pairs]
        shuffled = list(ests)
        rnd.shuffle(shuffled)
        a, b = pool_fixed_effect(ests), pool_fixed_effect(shuffled)
        if len(ests) > 1:
            assert (a.estimate, a.std_error) == (b.estimate, b.std_error)

    @given(st.lists(st.tuples(st.floats(-10, 10), st.floats(0.01, 10)), min_size=2, max_size=12))
    def test_duplication(self, pairs):
        ests = [StudyEstimate(e, s) for e, s in pairs]
        a, b = pool_fixed_effect(ests), pool_fixed_effect(ests + ests)
        assert b.estimate == a.estimate
        # halving is exact in the summed precision; se**2 adds one rounding each side
        assert b.variance == pytest.approx(a.variance / 2, rel=4 * np.finfo(float).eps)


# -- plot data ----------------------------------------------------------------

DENSITY = dict(eta=-1.0, sigma2=1.0, sigma_s_grid=[0.2, 0.5, 1.0], x_min=-9.0, x_max=7.0, n_points=2001)
BIAS = dict(eta=-1.0, sigma2=1.0, sigma_s_grid=[0.1, 0.5, 0.9], s_min=-3.0, s_max=1.0, n_points=41)
POS = dict(eta=-1.0, sigma2=1.0, sigma_l=0.13, delta=-1.5, sigma_s_grid=[0.18, 0.45],
           s_min=-2.5, s_max=-1.6, n_points=10)
THRESH = dict(eta=-1.0, sigma2=1.0, delta=-1.5, sigma_s_min=0.05, sigma_s_max=1.5, n_points=30)


class TestPlotData:
    def test_bias_zero_at_eta(self):
        t = emit_plot_data("bias_vs_s", BIAS)
        row = int(np.flatnonzero(t.columns["s"] == -1.0)[0])
        for ss in BIAS["sigma_s_grid"]:
            assert t.columns[f"bias@sigma_s={ss!r}"][row] == 0.0

    def test_bias_lines(self):
        t = emit_plot_data("bias_vs_s", BIAS)
        s = t.columns["s"]
        y = t.columns["bias@sigma_s=0.5"]
        np.testing.assert_allclose(y, -0.2 * (s + 1.0), atol=1e-14)

    def test_pos_rows_match_library(self):
        t = emit_plot_data("pos_vs_s", POS)
        for ss in POS["sigma_s_grid"]:
            col = t.columns[f"pos@sigma_s={ss!r}"]
            for s, v in zip(t.columns["s"], col):
                assert v == pos_large(NormalPrior(-1.0, 1.0), ss, 0.13, s, -1.5)

    def test_density_integrates_to_one(self):
        t = emit_plot_data("density", DENSITY)
        x = t.columns["x"]
        for name, col in t.columns.items():
            if name != "x":
                assert abs(trapezoid(col, x) - 1.0) <= 1e-4

    def test_threshold_increasing(self):
        t = emit_plot_data("threshold_vs_sigma_s", THRESH)
        assert np.all(np.diff(t.columns["prob_meet_threshold"]) > 0)

    def test_adjust_compare(self):
        params = dict(eta=0.244, sigma2=0.0196, portfolio=str(FIXTURES / "ra_like.csv"),
                      small_phase="phase2", large_phase="phase3")
        t = emit_plot_data("adjust_compare", params)
        pf = parse_portfolio(FIXTURES / "ra_like.csv")
        both = [c for c in pf.compounds
                if {s.phase for s in c.studies} >= {"phase2", "phase3"}]
        assert t.labels == [c.compound_id for c in both]
        obs, adj = t.columns["small_observed"], t.columns["small_adjusted"]
        assert np.all(np.abs(adj - 0.244) <= np.abs(obs - 0.244))

    def test_missing_params_listed(self):
        with pytest.raises(ValidationError, match="delta.*sigma_s_grid"):
            emit_plot_data("pos_vs_s", dict(eta=-1.0, sigma2=1.0, sigma_l=0.1,
                                            s_min=-2, s_max=0, n_points=5))

    def test_unknown_figure(self):
        with pytest.raises(ValidationError):
            emit_plot_data("scatter", {})

    @pytest.mark.parametrize("figure, params", [
        ("density", DENSITY), ("bias_vs_s", BIAS), ("pos_vs_s", POS), ("threshold_vs_sigma_s", THRESH),
    ])
    def test_byte_identical_and_round_trip(self, figure, params, tmp_path):
        a, b = tmp_path / "a.tsv", tmp_path / "b.tsv"
        write_plot_table(emit_plot_data(figure, params), a)
        write_plot_table(emit_plot_data(figure, dict(params)), b)
        assert a.read_bytes() == b.read_bytes()
        back = read_plot_table(a)
        orig = emit_plot_data(figure, params)
        assert back.figure_id == figure
        assert back.params == orig.params
        assert list(back.columns) == list(orig.columns)
        for name in orig.columns:
            np.testing.assert_array_equal(back.columns[name], orig.columns[name])

    def test_header_line(self):
        buf = io.StringIO()
        write_plot_table(emit_plot_data("bias_vs_s", BIAS), buf)
        first, second = buf.getvalue().splitlines()[:2]
        assert first.startswith("# {")
        assert second.split("\t")[0] == "s"

    def test_every_figure_declares_params(self):
        assert set(FIGURES) >= {"density", "bias_vs_s", "pos_vs_s", "adjust_compare"}
