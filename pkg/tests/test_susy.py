import numpy as np
import pytest
import sympy as sp

from mfsol.algebra import GrassmannElement
from mfsol.grids import Grid2
from mfsol.susy import (SuperFieldSymbols, SuperMatrix, check_structure_relations,
                        assemble_U, assemble_V, generator_supermatrices,
                        mlxv_bracket_verdicts, mlxv_frame_residual,
                        mv_constraint_defect, mv_lax_residual, mv_residual,
                        osp_generators, supermatrix_from_fields,
                        susy_zero_curvature)


class TestGenerators:
    def test_l1(self):
        l1, *_ = osp_generators()
        assert np.allclose(l1, np.diag([1.0, -1.0, 0.0]))

    def test_l1_l2_commutator(self):
        l1, l2, *_ = osp_generators()
        assert np.allclose(l1 @ l2 - l2 @ l1, 2 * l2)

    def test_l5_l5_anticommutator(self):
        *_, l3, l4, l5 = osp_generators()
        assert np.allclose(l5 @ l5 + l5 @ l5, 2 * l3)

    def test_structure_relations_verdicts(self):
        verdicts = check_structure_relations()
        mismatches = [v for v in verdicts if not v.match]
        # exactly one printed relation fails: the [l1, l3] coefficient
        assert len(mismatches) == 1
        v = mismatches[0]
        assert (v.i, v.j, v.kind) == (1, 3, "comm")
        assert v.printed == {3: 2}
        assert abs(v.computed[3] + 2.0) < 1e-12


class TestSuperMatrixAlgebra:
    def test_inverse_with_soul(self):
        rng = np.random.default_rng(3)
        n = 4
        body = rng.standard_normal((3, 3)) + np.eye(3) * 2
        m = SuperMatrix.from_numeric(body, n)
        t0 = GrassmannElement.generator(0, n)
        t1 = GrassmannElement.generator(1, n)
        m = m + SuperMatrix([[t0 * 0.3, t1 * 0.2, GrassmannElement(n)],
                             [GrassmannElement(n)] * 3,
                             [t0 * t1 * 0.5, GrassmannElement(n), GrassmannElement(n)]], n)
        prod = m @ m.inverse()
        eye = SuperMatrix.from_numeric(np.eye(3), n)
        assert (prod - eye).max_abs() < 1e-12

    def test_parity_grading(self):
        sym = SuperFieldSymbols()
        U = assemble_U(sym)
        # entries (1,3),(2,3),(3,1),(3,2) odd, the rest even
        assert U.entries[0][2].parity() == 1
        assert U.entries[1][2].parity() in (0, 1)  # zero entry counts as even
        assert U.entries[2][0].parity() == 1
        assert U.entries[0][1].parity() == 0


class TestAssembly:
    def test_zero_fields_zero_U(self):
        sym = SuperFieldSymbols()
        U = assemble_U(sym)
        subs = {sym.lam: 0, sym.q: 0, sym.p: 0}
        U0 = U.map_coeffs(lambda c: sp.simplify(sp.sympify(c).subs(subs)))
        # odd generators remain symbolically; strip them too
        total = sum(abs(complex(c)) if not c.free_symbols else 1.0
                    for i in range(3) for j in range(3)
                    for m, c in U0.entries[i][j].coeffs.items() if m == 0)
        assert total == 0.0

    def test_field_placement(self):
        sym = SuperFieldSymbols()
        U = assemble_U(sym)
        assert sp.simplify(U.entries[0][1].coeffs[0] - sym.q) == 0
        assert sp.simplify(U.entries[1][0].coeffs[0] - sym.p) == 0

    def test_V_lambda_structure(self):
        sym = SuperFieldSymbols()
        V = assemble_V(sym)
        # all fields zero: V = 2 i lam^2 l1
        e00 = sp.expand(V.entries[0][0].coeffs.get(0, 0))
        assert sp.simplify(e00.subs({sym.p: 0, sym.q: 0}) - 2 * sp.I * sym.lam ** 2) == 0
        # lam^1 part of the (1,2) entry equals 2*q (from 2 lam U)
        e01 = sp.expand(V.entries[0][1].coeffs.get(0, 0))
        assert sp.simplify(e01.coeff(sym.lam, 1) - 2 * sym.q) == 0
        # l1-coefficient at lam^0 is i(pq + 2 beta eps): check both parts
        assert sp.simplify(e00.coeff(sym.lam, 0) - sp.I * sym.p * sym.q) == 0
        be_mask = (1 << 0) | (1 << 1)
        assert sp.simplify(V.entries[0][0].coeffs.get(be_mask, 0) - 2 * sp.I) == 0


class TestZeroCurvature:
    rep = susy_zero_curvature()

    def test_lambda_buckets_vanish(self):
        assert self.rep.lam2_zero
        assert self.rep.lam1_zero

    def test_residual_in_algebra_span(self):
        assert self.rep.complement_zero

    def test_transposed_match_exact(self):
        assert self.rep.mismatches_transposed == []

    def test_plain_mismatch_set_frozen(self):
        # without the placement swap the even equations differ in the
        # dispersive/cubic signs and the odd-pair couplings; the enumerated
        # set is stable
        assert len(self.rep.mismatches_plain) == 18

    def test_bosonic_truncation(self):
        # q_t with odd symbols dropped: i(2 p q^2 - q_xx) (two-field system)
        sym = SuperFieldSymbols()
        rep = susy_zero_curvature(sym)
        qt = rep.evolution["q_t"]
        body = sp.simplify(qt.coeffs[0] - sp.I * (2 * sym.p * sym.q ** 2 - sym.q_xx))
        assert body == 0

    def test_jordan_wigner_numeric_oracle(self):
        # independent check: represent the odd symbols by Jordan-Wigner
        # matrices, draw random even values, substitute the derived
        # evolution and confirm the full residual vanishes numerically
        rng = np.random.default_rng(7)
        NO = 8
        sz = np.array([[1, 0], [0, -1]], dtype=complex)
        s_plus = np.array([[0, 1], [0, 0]], dtype=complex)
        eye2 = np.eye(2, dtype=complex)

        def jw(i):
            out = np.array([[1.0 + 0j]])
            for k in range(NO):
                out = np.kron(out, sz if k < i else (s_plus if k == i else eye2))
            return out

        theta = [jw(i) for i in range(NO)]
        dim = 2 ** NO
        names = ["beta", "eps", "beta_x", "eps_x", "beta_xx", "eps_xx",
                 "beta_t", "eps_t"]
        odd_vals = {}
        for idx, nm in enumerate(names):
            c = rng.standard_normal(NO) + 1j * rng.standard_normal(NO)
            odd_vals[nm] = sum(c[k] * theta[k] for k in range(NO))
        sym = SuperFieldSymbols()
        even_syms = [sym.lam, sym.q, sym.p, sym.q_x, sym.p_x, sym.q_xx, sym.p_xx]
        even_vals = {s: complex(rng.standard_normal() + 1j * rng.standard_normal())
                     for s in even_syms}
        rep = susy_zero_curvature(sym)
        # evolution values for the time symbols
        def eval_elem(elem):
            out = np.zeros((dim, dim), dtype=complex)
            for mask, c in elem.coeffs.items():
                cval = complex(sp.sympify(c).subs(even_vals))
                mat = np.eye(dim, dtype=complex)
                for i in range(sym.n_generators):
                    if mask >> i & 1:
                        mat = mat @ odd_vals[names[i]]
                out += cval * mat
            return out

        qt_val = eval_elem(rep.evolution["q_t"])
        pt_val = eval_elem(rep.evolution["p_t"])
        # odd equations: bucket = name_t + rest  =>  name_t = -rest
        bt_bucket = rep.evolution["beta_t_eqn"]
        et_bucket = rep.evolution["eps_t_eqn"]
        bt_rest = GrassmannElement(sym.n_generators,
                                   {m: c for m, c in bt_bucket.coeffs.items()
                                    if m != (1 << 6)})
        et_rest = GrassmannElement(sym.n_generators,
                                   {m: c for m, c in et_bucket.coeffs.items()
                                    if m != (1 << 7)})
        odd_vals["beta_t"] = -eval_elem(bt_rest)
        odd_vals["eps_t"] = -eval_elem(et_rest)

        # build U, V, U_t, V_x as block matrices over the JW algebra
        def block(gen3, op):
            out = np.zeros((3 * dim, 3 * dim), dtype=complex)
            for i in range(3):
                for j in range(3):
                    if gen3[i][j] != 0:
                        out[i * dim:(i + 1) * dim, j * dim:(j + 1) * dim] = \
                            gen3[i][j] * op
            return out

        gens = [g.tolist() for g in osp_generators()]
        I_op = np.eye(dim, dtype=complex)
        lam, q, p = even_vals[sym.lam], even_vals[sym.q], even_vals[sym.p]
        q_x, p_x = even_vals[sym.q_x], even_vals[sym.p_x]
        q_xx, p_xx = even_vals[sym.q_xx], even_vals[sym.p_xx]
        U = (1j * lam * block(gens[0], I_op) + q * block(gens[1], I_op)
             + p * block(gens[2], I_op) + block(gens[3], odd_vals["beta"])
             + block(gens[4], odd_vals["eps"]))
        W0 = (1j * p * q * block(gens[0], I_op)
              + 2j * block(gens[0], odd_vals["beta"] @ odd_vals["eps"])
              - 1j * q_x * block(gens[1], I_op) + 1j * p_x * block(gens[2], I_op)
              - 2j * block(gens[3], odd_vals["beta_x"])
              + 2j * block(gens[4], odd_vals["eps_x"]))
        V = 2 * lam * U + W0
        Ux = (q_x * block(gens[1], I_op) + p_x * block(gens[2], I_op)
              + block(gens[3], odd_vals["beta_x"]) + block(gens[4], odd_vals["eps_x"]))
        W0x = (1j * (p_x * q + p * q_x) * block(gens[0], I_op)
               + 2j * block(gens[0], odd_vals["beta_x"] @ odd_vals["eps"]
                            + odd_vals["beta"] @ odd_vals["eps_x"])
               - 1j * q_xx * block(gens[1], I_op) + 1j * p_xx * block(gens[2], I_op)
               - 2j * block(gens[3], odd_vals["beta_xx"])
               + 2j * block(gens[4], odd_vals["eps_xx"]))
        Vx = 2 * lam * Ux + W0x
        Ut = (qt_val[0, 0] if False else None)
        Ut = (block(gens[1], qt_val) + block(gens[2], pt_val)
              + block(gens[3], odd_vals["beta_t"]) + block(gens[4], odd_vals["eps_t"]))
        # note: q_t, p_t are even Grassmann values (body + soul), so they
        # enter as operator blocks rather than scalars
        res = Ut - Vx + U @ V - V @ U
        assert np.abs(res).max() < 1e-10


class TestMVResidual:
    g = Grid2(64)

    def test_constant_l1(self):
        R = supermatrix_from_fields(np.ones(64), np.zeros(64), np.zeros(64))
        assert mv_constraint_defect(R) < 1e-14
        stack = [R] * 5
        res = mv_residual(stack, self.g, 1e-3)
        assert res.max_abs() < 1e-12

    def test_bosonic_reduction_is_spin_flow(self):
        # x-rotating bosonic data evolving by the 1D spin chain: the
        # supermatrix residual matches the 2x2 reduction computed from the
        # vector flow (S_t = S x S_xx)
        from mfsol.solvers import lle_rhs, rk4_step
        g = self.g
        theta = g.x + 0.2 * np.sin(g.x)
        S = np.stack([np.cos(theta), np.sin(theta), np.zeros(64)], axis=-1)
        dt = 1e-4
        stack_S = [S]
        s = S.copy()
        for _ in range(4):
            s = rk4_step(s, dt, lambda v: lle_rhs(v, g))
            s /= np.linalg.norm(s, axis=-1, keepdims=True)
            stack_S.append(s)
        stack = [supermatrix_from_fields(Sm[:, 2], Sm[:, 0] + 1j * Sm[:, 1],
                                         Sm[:, 0] - 1j * Sm[:, 1])
                 for Sm in stack_S]
        res = mv_residual(stack, g, dt)
        # i R_t = (1/2)[R, R_xx] is the matrix form of twice... the vector
        # flow; residual is then discretization-limited
        assert res.max_abs() < 1e-8

    def test_odd_corrected_constraint(self):
        # odd fields with the compensating even correction keep R^3 = R
        n = 8
        t0 = GrassmannElement.generator(0, n)
        t1 = GrassmannElement.generator(1, n)
        x = self.g.x
        g1 = t0 * (0.3 * np.sin(x))
        g2 = t1 * (0.2 * np.cos(x))
        s3 = np.full(64, 0.6)
        sp_ = np.sqrt(1 - s3 ** 2) * np.exp(1j * x)
        sm = np.conj(sp_)
        # S3 correction: S3^2 + Sp Sm + 2 g1 g2 = 1
        corr = GrassmannElement.scalar(s3, n) + (t0 * t1) * (
            -(0.3 * np.sin(x)) * (0.2 * np.cos(x)) / s3)
        R = SuperMatrix([
            [corr, GrassmannElement.scalar(sm, n), g1],
            [GrassmannElement.scalar(sp_, n), -1 * corr, g2],
            [g2, -1 * g1, GrassmannElement(n)],
        ], n)
        assert mv_constraint_defect(R) < 1e-12

    def test_constraint_violation_rejected(self):
        R = supermatrix_from_fields(2.0 * np.ones(64), np.zeros(64), np.zeros(64))
        with pytest.raises(ValueError):
            mv_residual([R] * 5, self.g, 1e-3)

    def test_lax_residual_evaluates(self):
        # the alternative Lax form is an evaluator: on a stationary circle
        # profile its lambda^2 content -2 i lam^2 R_x survives (reported,
        # not asserted zero)
        theta = self.g.x
        S = np.stack([np.cos(theta), np.sin(theta), np.zeros(64)], axis=-1)
        R = supermatrix_from_fields(S[:, 2], S[:, 0] + 1j * S[:, 1],
                                    S[:, 0] - 1j * S[:, 1])
        res = mv_lax_residual([R] * 5, self.g, 1e-3, lam=0.7)
        assert np.isfinite(res.max_abs())
        assert res.max_abs() > 1e-3


class TestMLXVFrames:
    def test_zero_fields(self):
        g = Grid2(64)
        res = mlxv_frame_residual(0.0, 0.0, GrassmannElement(8),
                                  GrassmannElement(8), 0.0, g)
        assert max(res["printed"].values()) < 1e-12
        assert max(res["conjugated"].values()) < 1e-12

    def test_bosonic_constant_fields(self):
        g = Grid2(256)
        res = mlxv_frame_residual(0.4, 0.4, GrassmannElement(8),
                                  GrassmannElement(8), 0.3, g)
        assert max(res["printed"].values()) < 1e-8
        assert max(res["conjugated"].values()) < 1e-8

    def test_bracket_verdicts(self):
        v = mlxv_bracket_verdicts()
        assert v["l1"] and v["l2"] and v["l3"]
        # the odd-generator brackets deviate in the odd-coefficient terms
        assert not v["l4"] and not v["l5"]

    def test_odd_fields_conjugated_reading_closes(self):
        g = Grid2(128)
        n = 8
        beta = GrassmannElement.generator(0, n, coeff=0.3)
        eps = GrassmannElement.generator(1, n, coeff=0.2)
        res = mlxv_frame_residual(0.4, -0.2, beta, eps, 0.5, g)
        # the bracket (conjugated) reading is an identity of the linear
        # problem; the printed coefficient reading picks up soul-squared
        # corrections once odd fields are present
        assert max(res["conjugated"].values()) < 1e-7
        assert max(res["printed"].values()) > 1e-3
