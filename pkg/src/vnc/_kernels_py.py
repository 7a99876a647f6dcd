"""Pure-Python/NumPy implementation of the integration kernels.

Mirrors ``vnc._kernels`` (Cython) operation for operation: the same bytecode
interpreter, the same pivoting rule for the control solve, the same status
codes.  It is selected when the compiled extension is unavailable or when
``VNC_PURE_PYTHON=1`` is set.
"""

from __future__ import annotations

import math

import numpy as np

OK, DOMAIN, NONFINITE, SINGULAR, NOT_PD = range(5)
UNCONTROLLED, CLOSED_LOOP, CONSTRAINED, NONHOLONOMIC = range(4)
PIVOT_RTOL = 1e-10

OP_CONST, OP_VAR, OP_NEG, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW = range(8)
OP_SIN, OP_COS, OP_TAN, OP_EXP, OP_LOG, OP_SQRT, OP_ABS = range(8, 15)


class KernelError(Exception):
    def __init__(self, code: int):
        super().__init__(code)
        self.code = code


def _is_int(x: float) -> bool:
    return x == math.floor(x)


def _run(ops, args, consts, lo, hi, point, n, want_grad):
    """Interpret one postfix program; gradients are with respect to the first
    ``n`` slots of ``point``."""
    vals: list[float] = []
    grads: list[np.ndarray] = []
    zero = np.zeros(n)
    for pc in range(lo, hi):
        op = ops[pc]
        if op == OP_CONST:
            vals.append(consts[args[pc]])
            grads.append(zero)
        elif op == OP_VAR:
            s = args[pc]
            vals.append(point[s])
            if want_grad and s < n:
                g = np.zeros(n)
                g[s] = 1.0
                grads.append(g)
            else:
                grads.append(zero)
        elif op == OP_NEG:
            vals[-1] = -vals[-1]
            grads[-1] = -grads[-1]
        elif op <= OP_POW:
            b, gb = vals.pop(), grads.pop()
            a, ga = vals[-1], grads[-1]
            if op == OP_ADD:
                v, g = a + b, ga + gb
            elif op == OP_SUB:
                v, g = a - b, ga - gb
            elif op == OP_MUL:
                v, g = a * b, ga * b + gb * a
            elif op == OP_DIV:
                if b == 0.0:
                    raise KernelError(DOMAIN)
                v = a / b
                g = (ga - gb * v) / b
            else:
                if want_grad and np.any(gb != 0.0):
                    if a <= 0.0:
                        raise KernelError(DOMAIN)
                    v = math.exp(b * math.log(a))
                    g = v * (gb * math.log(a) + ga * (b / a))
                else:
                    if (a == 0.0 and b < 0.0) or (a < 0.0 and not _is_int(b)):
                        raise KernelError(DOMAIN)
                    try:
                        v = a**b
                    except OverflowError:
                        raise KernelError(NONFINITE) from None
                    g = zero if b == 0.0 else ga * (b * a ** (b - 1.0))
            vals[-1], grads[-1] = v, g
        else:
            a, ga = vals[-1], grads[-1]
            if op == OP_SIN:
                v, d = math.sin(a), math.cos(a)
            elif op == OP_COS:
                v, d = math.cos(a), -math.sin(a)
            elif op == OP_TAN:
                v = math.tan(a)
                d = 1.0 + v * v
            elif op == OP_EXP:
                if a > 709.0:
                    raise KernelError(DOMAIN)
                v = d = math.exp(a)
            elif op == OP_LOG:
                if a <= 0.0:
                    raise KernelError(DOMAIN)
                v, d = math.log(a), 1.0 / a
            elif op == OP_SQRT:
                if a < 0.0:
                    raise KernelError(DOMAIN)
                v = math.sqrt(a)
                d = 0.5 / v if v > 0.0 else 0.0
            else:
                v = abs(a)
                d = 1.0 if a > 0.0 else (-1.0 if a < 0.0 else 0.0)
            vals[-1], grads[-1] = v, ga * d
    return vals[0], grads[0]


def _solve_pivoted(A: np.ndarray, B: np.ndarray, scale: float) -> np.ndarray:
    """Gaussian elimination with partial pivoting; a pivot at or below
    ``PIVOT_RTOL * max(max|A|, scale)`` signals a singular system."""
    A = A.astype(float, copy=True)
    B = B.astype(float, copy=True)
    size = A.shape[0]
    cutoff = PIVOT_RTOL * max(float(np.max(np.abs(A))) if A.size else 0.0, scale)
    for c in range(size):
        p = c + int(np.argmax(np.abs(A[c:, c])))
        if abs(A[p, c]) <= cutoff:
            raise KernelError(SINGULAR)
        if p != c:
            A[[c, p]] = A[[p, c]]
            B[[c, p]] = B[[p, c]]
        for r in range(c + 1, size):
            f = A[r, c] / A[c, c]
            A[r, c:] -= f * A[c, c:]
            B[r] -= f * B[c]
    X = np.empty_like(B)
    for c in range(size - 1, -1, -1):
        X[c] = (B[c] - A[c, c + 1 :] @ X[c + 1 :]) / A[c, c]
    return X


class SystemKernel:
    """Accelerations and RK4 integration for one compiled system.

    ``starts`` delimits the programs in the order: metric (row-major ``n*n``),
    potential, constraints (``m*n``), inputs (``k*n``), drift force (``n``).
    """

    backend = "python"

    def __init__(self, n, m, k, ops, args, consts, starts, max_depth, has_force, has_potential):
        self.n, self.m, self.k = int(n), int(m), int(k)
        self.ops = [int(x) for x in ops]
        self.args = [int(x) for x in args]
        self.consts = [float(x) for x in consts]
        self.starts = [int(x) for x in starts]
        self.max_depth = int(max_depth)
        self.has_force = bool(has_force)
        self.has_potential = bool(has_potential)

    # -- field evaluation -------------------------------------------------
    def _eval(self, idx, point, want_grad):
        return _run(
            self.ops, self.args, self.consts, self.starts[idx], self.starts[idx + 1],
            point, self.n, want_grad,
        )

    def _block(self, first, rows, cols, point):
        val = np.empty((rows, cols))
        grad = np.empty((self.n, rows, cols))
        for r in range(rows):
            for c in range(cols):
                v, g = self._eval(first + r * cols + c, point, True)
                val[r, c] = v
                grad[:, r, c] = g
        return val, grad

    def _fields(self, q, v):
        n, m, k = self.n, self.m, self.k
        point = list(q) + list(v)
        M, dM = self._block(0, n, n, point)
        if self.has_potential:
            V, gV = self._eval(n * n, point, True)
        else:
            V, gV = 0.0, np.zeros(n)
        C, dC = self._block(n * n + 1, m, n, point)
        F, dF = self._block(n * n + 1 + m * n, k, n, point)
        f0 = np.zeros(n)
        if self.has_force:
            base = n * n + 1 + m * n + k * n
            for i in range(n):
                f0[i] = self._eval(base + i, point, False)[0]
        return M, dM, V, gV, C, dC, F, dF, f0

    def energy(self, q, v) -> float:
        M, _, V, *_ = self._fields(np.asarray(q, float), np.asarray(v, float))
        v = np.asarray(v, float)
        return 0.5 * float(v @ M @ v) + V

    # -- accelerations ------------------------------------------------------
    def _accel(self, q, v, formulation, stabilize):
        n, m, k = self.n, self.m, self.k
        M, dM, _, gV, C, dC, F, dF, f0 = self._fields(q, v)
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            raise KernelError(NOT_PD) from None
        Linv = np.linalg.inv(L)
        Minv = Linv.T @ Linv

        def gam(a, b):
            dMa = np.tensordot(a, dM, 1)
            dMb = np.tensordot(b, dM, 1)
            w = dMa @ b + dMb @ a - np.einsum("lij,i,j->l", dM, a, b)
            return 0.5 * (Minv @ w)

        g = gam(v, v)
        ext = f0 - Minv @ gV
        a0 = -g + ext
        if formulation == UNCONTROLLED or m == 0:
            return a0, np.zeros(k if formulation != NONHOLONOMIC else m)
        if formulation == NONHOLONOMIC:
            F, dF = C, dC
        elif k != m:
            raise KernelError(SINGULAR)
        dC_v = np.tensordot(v, dC, 1)
        Y = Minv @ F.T
        A = C @ Y
        scale = float(np.linalg.norm(C) * np.linalg.norm(Y))
        rhs = -(dC_v @ v + C @ a0)
        if formulation == CLOSED_LOOP and stabilize != 0.0:
            rhs = rhs - stabilize * (C @ v)
        sol = _solve_pivoted(A, np.column_stack([rhs, C]), scale)
        tau, W = sol[:, 0], sol[:, 1:]
        if formulation == CLOSED_LOOP:
            return a0 + Y @ tau, tau
        # induced connection: P_D g + (dP_F)_v v + Gamma(v, P_F v), forcing by P_D
        dM_v = np.tensordot(v, dM, 1)
        dF_v = np.tensordot(v, dF, 1)
        dY_v = -Minv @ dM_v @ Y + Minv @ dF_v.T
        dA_v = dC_v @ Y + C @ dY_v
        Wv = W @ v
        dWv = _solve_pivoted(A, (dC_v @ v - dA_v @ Wv)[:, None], scale)[:, 0]
        PFv = Y @ Wv
        PD_g = g - Y @ (W @ g)
        gamma_c = PD_g + dY_v @ Wv + Y @ dWv + gam(v, PFv)
        PD_ext = ext - Y @ (W @ ext)
        return -gamma_c + PD_ext, tau

    def acceleration(self, q, v, formulation, stabilize=0.0):
        """``(qddot, u)``; raises :class:`KernelError` on failure."""
        q = np.asarray(q, dtype=float)
        v = np.asarray(v, dtype=float)
        acc, u = self._accel(q, v, int(formulation), float(stabilize))
        if not (np.all(np.isfinite(acc)) and np.all(np.isfinite(u))):
            raise KernelError(NONFINITE)
        return acc, u

    def constraint_values(self, q, v):
        point = list(q) + list(v)
        n, m = self.n, self.m
        C = np.array([[self._eval(n * n + 1 + r * n + c, point, False)[0] for c in range(n)] for r in range(m)])
        return C.reshape(m, n) @ np.asarray(v, float)

    # -- integration --------------------------------------------------------
    def integrate_rk4(self, q0, v0, dt, nsteps, formulation, stabilize=0.0):
        """Fixed-step RK4.

        Returns ``(Q, V, U, PHI, E, status, nvalid)``: arrays sized for
        ``nsteps + 1`` samples, of which the first ``nvalid`` are filled.
        """
        n, m = self.n, self.m
        nu = m if formulation == NONHOLONOMIC else self.k
        Q = np.zeros((nsteps + 1, n))
        V = np.zeros((nsteps + 1, n))
        U = np.zeros((nsteps + 1, nu))
        PHI = np.zeros((nsteps + 1, m))
        E = np.zeros(nsteps + 1)
        q = np.array(q0, dtype=float)
        v = np.array(v0, dtype=float)
        h = float(dt)
        filled = 0
        try:
            a1, u1 = self.acceleration(q, v, formulation, stabilize)
            for i in range(nsteps + 1):
                Q[i], V[i], U[i] = q, v, u1
                PHI[i] = self.constraint_values(q, v)
                E[i] = self.energy(q, v)
                filled = i + 1
                if i == nsteps:
                    break
                a2, _ = self.acceleration(q + 0.5 * h * v, v + 0.5 * h * a1, formulation, stabilize)
                v2 = v + 0.5 * h * a1
                a3, _ = self.acceleration(q + 0.5 * h * v2, v + 0.5 * h * a2, formulation, stabilize)
                v3 = v + 0.5 * h * a2
                a4, _ = self.acceleration(q + h * v3, v + h * a3, formulation, stabilize)
                v4 = v + h * a3
                q = q + (h / 6.0) * (v + 2.0 * v2 + 2.0 * v3 + v4)
                v = v + (h / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
                if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
                    raise KernelError(NONFINITE)
                a1, u1 = self.acceleration(q, v, formulation, stabilize)
        except KernelError as exc:
            return Q, V, U, PHI, E, exc.code, filled
        return Q, V, U, PHI, E, OK, nsteps + 1
