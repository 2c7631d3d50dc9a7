"""
Acceptance criteria 1-9, each at its stated size and tolerance.

Every test prints one ``[PASS]``/``[FAIL]`` line with its runtime; the lines
are repeated in the terminal summary (see ``conftest.py``).
"""

import filecmp
import math
import time


from incoherence_lab.cli import main
from incoherence_lab.covariance import ParamClass, Support, identity_cov
from incoherence_lab.region import default_axes, region_table
from incoherence_lab.sampling import (CALIBRATED_C, IdentityFamily, SampleConfig, calibrated_n,
                                      concentration_experiment, phase_transition_sweep)
from incoherence_lab.suites import (lasso_suite, lemmas_suite, necessity_orthonormal_suite, props_suite,
                                    sufficiency_r1_suite, theorem1_suite)

RESULTS = {}


class Criterion:
    def __init__(self, number, title):
        self.number, self.title = number, title

    def __enter__(self):
        self.start = time.perf_counter()
        self.detail = ""
        return self

    def __exit__(self, exc_type, exc, tb):
        secs = time.perf_counter() - self.start
        status = "PASS" if exc_type is None else "FAIL"
        line = f"[{status}] criterion {self.number}: {self.title} ({secs:.1f}s) {self.detail}".rstrip()
        RESULTS[self.number] = line
        print(line)
        return False


def test_criterion_1_uniform_recovery_equivalence():
    with Criterion(1, "MRI vs lambda sweep vs brute force, 200 instances, R in {2, 3}") as c:
        out = theorem1_suite(200, seed=7, R_values=(2.0, 3.0))
        cnt = out["counts"]
        c.detail = f"consistent={cnt['consistent']} boundary={cnt['boundary']} violated={cnt['violated']}"
        assert out["instances"] >= 200
        assert cnt["violated"] == 0, out["offending"][:3]
        assert time.perf_counter() - c.start < 120


def test_criterion_2_sufficiency_unit_spread():
    with Criterion(2, "no vertex counterexample where MRI holds at R = 1") as c:
        out = sufficiency_r1_suite(200, seed=0)
        cnt = out["counts"]
        c.detail = f"checked={cnt['consistent'] + cnt['violated']} boundary={cnt['boundary']} failures={cnt['violated']}"
        assert cnt["consistent"] + cnt["violated"] + cnt["boundary"] >= 200
        assert cnt["violated"] == 0


def test_criterion_3_orthonormal_necessity():
    with Criterion(3, "constructed witness fails recovery for every violating Sigma_SS = I instance") as c:
        out = necessity_orthonormal_suite(100, seed=0)
        cnt = out["counts"]
        c.detail = f"witnesses={cnt['consistent']} boundary={cnt['boundary']} bad={cnt['violated']}"
        assert cnt["consistent"] >= 100
        assert cnt["violated"] == 0


def test_criterion_4_lemmas():
    with Criterion(4, "orthonormal agreement, |a - lam b| identity, dual-set containments") as c:
        out = lemmas_suite(500, seed=0, ab_pairs=10_000, phi_draws=100_000)
        parts = out["parts"]
        ortho, ab, dual = parts["orthonormal_agreement"], parts["ab_lambda"], parts["dual_sets"]
        c.detail = (f"ortho={ortho['consistent']}/{ortho['boundary']}b ab={ab['consistent']} "
                    f"phi={dual['consistent']} r2_extra={dual['r2_dual_not_inner']} "
                    f"bound_checked={dual['bound_checked']}")
        assert ortho["consistent"] + ortho["boundary"] == 500 and ortho["violated"] == 0
        assert ab["consistent"] == 10_000 and ab["violated"] == 0
        assert dual["consistent"] == 100_000 and dual["violated"] == 0
        assert dual["r2_dual_not_inner"] == 0
        assert parts["infnorm"]["violated"] == 0


def test_criterion_5_propositions():
    with Criterion(5, "PWI implication, RIP bound, small-eigenvalue obstruction on 500 instances each") as c:
        out = props_suite(500, seed=0)
        parts = out["parts"]
        c.detail = " ".join(f"{k}:ok={v['consistent']},b={v['boundary']},bad={v['violated']}"
                            for k, v in parts.items())
        c.detail += (f" premise_pwi={parts['pwi']['premise_held']} premise_rip={parts['rip']['premise_held']}"
                     f" obstructed={parts['small_eigen']['obstructed']}")
        for name, counts in parts.items():
            assert counts["consistent"] + counts["violated"] + counts["boundary"] == 500, name
            assert counts["violated"] == 0, name


def test_criterion_6_block_region():
    with Criterion(6, "50x50 (mu, eta) region, r = 2, R = 1") as c:
        rows = region_table(2, 1.0, *default_axes(2, 50))
        off = [r for r in rows if not r["boundary"]]
        closed_bad = sum(r["mri_closed"] != r["mri_direct"] for r in off)
        band = [r for r in off if 0 <= r["mu"] < 0.5]
        lasso_bad = sum(r["mri_direct"] != r["lasso_ok"] for r in band)
        c.detail = f"cells={len(rows)} off_band={len(off)} closed_mismatch={closed_bad} mri_vs_lasso_mismatch={lasso_bad}/{len(band)}"
        assert len(rows) == 2500
        assert closed_bad == 0
        assert band and lasso_bad == 0
        assert time.perf_counter() - c.start < 30


def test_criterion_7_population_lasso():
    with Criterion(7, "Lasso sign consistency iff LAI < 1, 100 instances, all sign patterns") as c:
        out = lasso_suite(100, seed=0)
        cnt = out["counts"]
        c.detail = (f"consistent={cnt['consistent']} boundary={cnt['boundary']} lai<1={cnt['lai_below_one']} "
                    f"bad={cnt['violated']} max_kkt={out['max_kkt_residual']:.1e}")
        assert cnt["consistent"] + cnt["violated"] + cnt["boundary"] == 100
        assert cnt["violated"] == 0
        assert out["max_kkt_residual"] <= 1e-8


def test_criterion_8_sampling():
    with Criterion(8, "identity design p = 200, s = 5: monotone success, calibrated n, sqrt(2) rate") as c:
        p, s = 200, 5
        cfg = SampleConfig(1, 1.0, 2024, 500)
        n_star = calibrated_n(s, p)
        grid = sorted({calibrated_n(s, p, k) for k in (0.5, 1, 2, 3, 4, 6, 8)} | {n_star})
        rows = phase_transition_sweep(IdentityFamily(p), [s], grid, cfg)
        rate = {r["n"]: r["success_rate"] for r in rows}
        seq = [rate[n] for n in grid]
        drops = [a - b for a, b in zip(seq, seq[1:]) if b < a]
        cls = ParamClass(Support(tuple(range(s)), p), 1.0, 1.0)
        med = [concentration_experiment(identity_cov(p), cls, math.inf, SampleConfig(n, 1.0, 2024, 500))["median_error"]
               for n in (n_star, 2 * n_star)]
        ratio = med[1] / med[0]
        c.detail = (f"C={CALIBRATED_C:g} n*={n_star} success(n*)={rate[n_star]:.3f} "
                    f"max_drop={max(drops, default=0):.3f} median_ratio={ratio:.3f}")
        assert max(drops, default=0.0) <= 0.03
        assert rate[n_star] >= 0.95
        assert abs(ratio * math.sqrt(2) - 1) <= 0.15
        assert time.perf_counter() - c.start < 300


COMMANDS = [
    ["verify", "theorem1", "--instances", "20", "--seed", "5", "--out", "out.json"],
    ["verify", "lemmas", "--instances", "30", "--seed", "5", "--out", "out.json"],
    ["verify", "props", "--instances", "30", "--seed", "5", "--out", "out.json"],
    ["verify", "conjecture1", "--instances", "500", "--seed", "5", "--out", "out.json"],
    ["sample", "--p", "50", "--s", "2,3", "--n-grid", "10,40", "--replicates", "40", "--seed", "5",
     "--out", "out.csv"],
    ["sample", "--p", "50", "--s", "2", "--n-grid", "30", "--replicates", "1", "--seed", "5", "--out", "out.csv"],
    ["region", "--grid", "15", "--out", "out.csv"],
]


def test_criterion_9_determinism(tmp_path, monkeypatch, capsys):
    with Criterion(9, "randomized commands reproduce byte-identical output") as c:
        checked = 0
        for i, cmd in enumerate(COMMANDS):
            outputs = []
            for run in ("a", "b"):
                d = tmp_path / f"{i}{run}"
                d.mkdir()
                monkeypatch.chdir(d)
                code = main(cmd)
                stdout = capsys.readouterr().out
                assert code == 0, cmd
                files = sorted(p.name for p in d.iterdir() if not p.name.endswith(".manifest.json"))
                outputs.append((d, stdout, files))
            (da, outa, fa), (db, outb, fb) = outputs
            assert outa == outb, cmd
            assert fa == fb and fa
            match, mismatch, errors = filecmp.cmpfiles(da, db, fa, shallow=False)
            assert not mismatch and not errors, (cmd, mismatch)
            checked += len(match) + 1
        c.detail = f"commands={len(COMMANDS)} artifacts_compared={checked}"
