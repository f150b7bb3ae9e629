import json
import math

import numpy as np
import pytest

from dnl.audit import (DEFAULT_AUDIT_CONFIG, PLANTED_DEFECTS, audit_H1, audit_H2, audit_H2star, audit_H3,
                       audit_H4, audit_sandwich, random_field, run_full_audit, sign_changing_fields)
from dnl.domain import build_path_grid, negative_part, positive_part
from dnl.energy import ConcaveQuadratic, Energy, GraphPDirichlet, LerayLions1D, LerayLionsSpec, ShiftedEnergy
from dnl.errors import ConfigError
from dnl.nonlinearity import Identity, PowerLaw, TestFunctionJ0, TruncationP0

GRID = build_path_grid(16, 1 / 17)


class Negated(Energy):
    """``-E``: flips the sign of every subgradient."""

    kind = "negated"

    def __init__(self, base):
        super().__init__(base.domain)
        self.base = base

    def value(self, u):
        return -self.base.value(u)

    def grad(self, u):
        return -self.base.grad(u)


@pytest.fixture(scope="module")
def default_report():
    return run_full_audit({"seed": 42})


class TestH1:
    @pytest.mark.parametrize("p", [1.5, 2.0, 3.0, 4.0])
    def test_graph_passes(self, p):
        res = audit_H1(GraphPDirichlet(GRID, p), trials=200)
        assert res.passed and res.samples_run == 201
        assert res.worst_margin == 0.0  # the subgradient at 0 is exactly 0

    def test_shift_fails(self):
        res = audit_H1(ShiftedEnergy(GraphPDirichlet(GRID, 2), 0.5), trials=50)
        assert not res.passed
        assert res.witness is not None

    def test_leray_lions_passes(self):
        E = LerayLions1D(GRID, LerayLionsSpec.weighted_p_flux(3.0, "1+0.5*cos(2*pi*x)"))
        assert audit_H1(E, trials=200).passed


class TestH2:
    @pytest.mark.parametrize("p", [2.0, 3.0])
    def test_graph_passes(self, p):
        assert audit_H2(GraphPDirichlet(GRID, p), pair_count=40).passed

    def test_square_is_monotonicity(self):
        E = GraphPDirichlet(GRID, 3)
        res = audit_H2(E, pair_count=40, j_family=[TestFunctionJ0("Square")])
        assert res.passed
        rng = np.random.default_rng(0)
        for _ in range(40):
            u, uh = random_field(rng, GRID), random_field(rng, GRID)
            assert np.dot(GRID.measure, (E.subgradient(u) - E.subgradient(uh)) * (u - uh)) >= 0

    def test_anti_monotone_fails(self):
        E = ConcaveQuadratic(GRID, 0.5)  # subgradient v = -u
        u = random_field(np.random.default_rng(1), GRID, 1.0)
        assert np.allclose(E.subgradient(u)[GRID.free], -u[GRID.free])
        res = audit_H2(E, pair_count=20)
        assert not res.passed
        assert {"u", "u_hat", "j", "lambda"} <= set(res.witness)


class TestH2Star:
    @pytest.mark.parametrize("p", [1.5, 2.0, 4.0])
    def test_graph_passes(self, p):
        assert audit_H2star(GraphPDirichlet(GRID, p), trial_count=100).passed

    def test_concave_fails(self):
        res = audit_H2star(ConcaveQuadratic(GRID), trial_count=50)
        assert not res.passed
        assert "T" in res.witness

    def test_family_cycles(self):
        res = audit_H2star(GraphPDirichlet(GRID, 3), trial_count=3, P0_family=[TruncationP0("HardClamp", 0.0)])
        assert res.worst_margin == 0.0


class TestH3:
    def test_p3_m2_passes(self):
        checks = audit_H3(GraphPDirichlet(GRID, 3), PowerLaw(2), lam_grid=[0.1], trial_count=100)
        assert [c.name for c in checks] == ["H3/yosida", "H3/sign0", "H3/gamma_eps"]
        assert all(c.passed for c in checks)

    def test_zero_field_integrals(self):
        from dnl.nonlinearity import sign0, yosida_operator
        E, phi = GraphPDirichlet(GRID, 3), PowerLaw(2)
        u = np.zeros(GRID.node_count)
        v = E.subgradient(u)
        y = yosida_operator(phi, 0.1, u)
        assert np.dot(GRID.measure, v * y) == 0.0
        assert np.dot(GRID.measure, v * sign0(y)) == 0.0

    def test_negated_subgradient_fails(self):
        checks = audit_H3(Negated(GraphPDirichlet(GRID, 3)), PowerLaw(2), lam_grid=[0.1], trial_count=40)
        assert not any(c.passed for c in checks)


class TestH4:
    def test_builtin_passes(self):
        res = audit_H4(GraphPDirichlet(GRID, 3), PowerLaw(2), trial_count=100)
        assert res.passed and res.worst_margin == 0.0

    def test_example(self):
        phi = PowerLaw(2)
        u = np.array([2.0, -3.0])
        assert np.array_equal(phi(u), [4.0, -9.0])
        assert np.array_equal(phi(positive_part(u)), [4.0, 0.0])
        assert np.array_equal(phi(negative_part(u)), negative_part(phi(u)))

    def test_infinite_energy_fails(self):
        class Barrier(GraphPDirichlet):
            def value(self, u):
                return math.inf if np.any(np.asarray(u) > 1.0) else super().value(u)

        res = audit_H4(Barrier(GRID, 2), Identity(), trial_count=50)
        assert not res.passed and res.worst_margin == -math.inf


class TestSandwich:
    def test_nonnegative_data(self):
        E, phi = GraphPDirichlet(GRID, 3), PowerLaw(2)
        f = np.abs(random_field(np.random.default_rng(2), GRID, 1.0))
        assert audit_sandwich(E, phi, [f], [0.1, 1.0]).passed

    def test_zero_data(self):
        res = audit_sandwich(GraphPDirichlet(GRID, 3), PowerLaw(2), [np.zeros(GRID.node_count)], [0.1])
        assert res.passed and res.worst_margin == 0.0
        assert np.all(res.witness["u"] == 0.0)

    def test_sign_changing_n32(self):
        dom = build_path_grid(32, 1 / 33)
        fs = sign_changing_fields(np.random.default_rng(3), dom, 5)
        assert all(np.any(f > 0) and np.any(f < 0) for f in fs)
        assert audit_sandwich(GraphPDirichlet(dom, 3), PowerLaw(2), fs, [0.1]).passed


class TestFullAudit:
    def test_default_passes(self, default_report):
        assert default_report.passed, default_report.summary()
        names = [c.name for c in default_report.checks]
        for n in ("H1", "H2", "H2*", "H3/yosida", "H3/sign0", "H3/gamma_eps", "H4", "sandwich",
                  "structure/zero", "structure/monotonicity"):
            assert n in names
        for c in default_report.checks:
            assert c.worst_margin >= -1e-8
        assert default_report.get("H2").samples_run == 200 * 6 * 4

    def test_report_schema(self, default_report):
        data = json.loads(default_report.to_json())
        assert data["schema_version"] == "1.0"
        assert data["config_echo"]["seed"] == 42
        assert any("lam * (v - v_hat)" in h for h in data["header"])
        for c in data["checks"]:
            assert set(c) >= {"name", "pass", "worst_margin", "witness", "samples_run"}

    def test_deterministic(self, default_report):
        assert run_full_audit({"seed": 42}).to_json() == default_report.to_json()

    def test_seed_changes_samples(self, default_report):
        other = run_full_audit({"seed": 7, "trials": 20, "h1_trials": 20})
        assert other.to_json() != default_report.to_json()

    @pytest.mark.parametrize("name", sorted(PLANTED_DEFECTS))
    def test_planted_defects(self, name):
        entry = PLANTED_DEFECTS[name]
        rep = run_full_audit(entry["config"])
        failed = set(rep.failed())
        assert failed == set(entry["targets"])
        assert set(entry["dedicated"]) <= failed
        for c in rep.checks:
            if not c.passed:
                assert c.witness is not None

    def test_no_flux_skips_structure(self):
        rep = run_full_audit({"energy": {"kind": "concave_quadratic"}, "trials": 10, "h1_trials": 10})
        assert rep.get("structure").skipped

    def test_crash_is_recorded(self):
        rep = run_full_audit({"energy": {"kind": "p_dirichlet", "p": 1.5, "eps_reg": 0.0},
                              "trials": 5, "h1_trials": 5, "sandwich_trials": 1})
        res = rep.get("sandwich")
        assert not res.passed and res.worst_margin == -math.inf
        assert res.error.startswith("SingularGradientError")
        assert rep.get("H2").passed

    def test_bad_lambda_grid(self):
        with pytest.raises(ConfigError):
            run_full_audit({"lambda_grid": []})

    def test_default_config_keys(self):
        assert DEFAULT_AUDIT_CONFIG["trials"] == 200
        assert DEFAULT_AUDIT_CONFIG["lambda_grid"] == [1e-3, 1e-2, 1e-1, 1.0]
        assert DEFAULT_AUDIT_CONFIG["tolerance"] == 1e-8
