# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled integration kernels.

Same interface and semantics as ``vnc._kernels_py``: a bytecode interpreter
with forward-mode gradients, the four acceleration formulations, and a fixed
step RK4 loop that records controls, constraint values and energy.
"""

from libc.math cimport sin, cos, tan, exp, log, sqrt, fabs, pow, floor, isfinite
from libc.stdlib cimport malloc, free
from libc.string cimport memset, memcpy

import numpy as np

cdef enum:
    OP_CONST = 0
    OP_VAR = 1
    OP_NEG = 2
    OP_ADD = 3
    OP_SUB = 4
    OP_MUL = 5
    OP_DIV = 6
    OP_POW = 7
    OP_SIN = 8
    OP_COS = 9
    OP_TAN = 10
    OP_EXP = 11
    OP_LOG = 12
    OP_SQRT = 13
    OP_ABS = 14
    S_OK = 0
    S_DOMAIN = 1
    S_NONFINITE = 2
    S_SINGULAR = 3
    S_NOT_PD = 4
    F_UNCONTROLLED = 0
    F_CLOSED_LOOP = 1
    F_CONSTRAINED = 2
    F_NONHOLONOMIC = 3


PIVOT_RTOL = 1e-10
cdef double _PIVOT_RTOL = 1e-10


class KernelError(Exception):
    def __init__(self, code):
        super().__init__(code)
        self.code = code


cdef class SystemKernel:
    """Accelerations and RK4 integration for one compiled system."""

    cdef public int n, m, k
    cdef int nexpr, depth, nprog
    cdef int* ops
    cdef int* args
    cdef double* consts
    cdef int* starts
    cdef bint has_force, has_potential
    # interpreter stacks
    cdef double* sval
    cdef double* sgrad
    # field workspace
    cdef double* point
    cdef double* M
    cdef double* dM      # dM[l*n*n + i*n + j] = d_l M_ij
    cdef double* gV
    cdef double V
    cdef double* C       # m x n
    cdef double* dC      # n x m x n
    cdef double* F       # k x n
    cdef double* dF      # n x k x n
    cdef double* f0
    # linear algebra workspace
    cdef double* L
    cdef double* Minv
    cdef double* work
    cdef int wsize

    def __cinit__(self, int n, int m, int k, int[::1] ops, int[::1] args, double[::1] consts,
                  int[::1] starts, int max_depth, bint has_force, bint has_potential):
        cdef int i
        self.n = n
        self.m = m
        self.k = k
        self.nexpr = starts.shape[0] - 1
        self.nprog = ops.shape[0]
        self.depth = max_depth + 1
        self.has_force = has_force
        self.has_potential = has_potential
        self.ops = <int*> malloc(max(self.nprog, 1) * sizeof(int))
        self.args = <int*> malloc(max(self.nprog, 1) * sizeof(int))
        self.consts = <double*> malloc(max(consts.shape[0], 1) * sizeof(double))
        self.starts = <int*> malloc((self.nexpr + 1) * sizeof(int))
        for i in range(self.nprog):
            self.ops[i] = ops[i]
            self.args[i] = args[i]
        for i in range(consts.shape[0]):
            self.consts[i] = consts[i]
        for i in range(self.nexpr + 1):
            self.starts[i] = starts[i]
        self.sval = <double*> malloc(self.depth * sizeof(double))
        self.sgrad = <double*> malloc(self.depth * n * sizeof(double))
        self.point = <double*> malloc(2 * n * sizeof(double))
        self.M = <double*> malloc(n * n * sizeof(double))
        self.dM = <double*> malloc(n * n * n * sizeof(double))
        self.gV = <double*> malloc(n * sizeof(double))
        self.C = <double*> malloc(max(m * n, 1) * sizeof(double))
        self.dC = <double*> malloc(max(n * m * n, 1) * sizeof(double))
        self.F = <double*> malloc(max(k * n, 1) * sizeof(double))
        self.dF = <double*> malloc(max(n * k * n, 1) * sizeof(double))
        self.f0 = <double*> malloc(n * sizeof(double))
        self.L = <double*> malloc(n * n * sizeof(double))
        self.Minv = <double*> malloc(n * n * sizeof(double))
        cdef int r = max(m, k)
        self.wsize = 16 * n * n + 8 * n * r + 8 * r * r + 16 * n + 16 * r + 64
        self.work = <double*> malloc(self.wsize * sizeof(double))
        if (self.ops == NULL or self.args == NULL or self.consts == NULL or self.starts == NULL
                or self.sval == NULL or self.sgrad == NULL or self.point == NULL or self.M == NULL
                or self.dM == NULL or self.gV == NULL or self.C == NULL or self.dC == NULL
                or self.F == NULL or self.dF == NULL or self.f0 == NULL or self.L == NULL
                or self.Minv == NULL or self.work == NULL):
            raise MemoryError()

    def __dealloc__(self):
        free(self.ops); free(self.args); free(self.consts); free(self.starts)
        free(self.sval); free(self.sgrad); free(self.point)
        free(self.M); free(self.dM); free(self.gV); free(self.C); free(self.dC)
        free(self.F); free(self.dF); free(self.f0); free(self.L); free(self.Minv)
        free(self.work)

    @property
    def backend(self):
        return "cython"

    # ------------------------------------------------------------------
    # interpreter

    cdef int run(self, int idx, double* out, double* grad, bint want_grad) noexcept nogil:
        cdef int n = self.n
        cdef int sp = -1
        cdef int pc, op, s, j
        cdef double a, b, v, d, la
        cdef double* ga
        cdef double* gb
        cdef bint gb_nonzero
        for pc in range(self.starts[idx], self.starts[idx + 1]):
            op = self.ops[pc]
            if op == OP_CONST:
                sp += 1
                self.sval[sp] = self.consts[self.args[pc]]
                if want_grad:
                    memset(&self.sgrad[sp * n], 0, n * sizeof(double))
            elif op == OP_VAR:
                sp += 1
                s = self.args[pc]
                self.sval[sp] = self.point[s]
                if want_grad:
                    memset(&self.sgrad[sp * n], 0, n * sizeof(double))
                    if s < n:
                        self.sgrad[sp * n + s] = 1.0
            elif op == OP_NEG:
                self.sval[sp] = -self.sval[sp]
                if want_grad:
                    for j in range(n):
                        self.sgrad[sp * n + j] = -self.sgrad[sp * n + j]
            elif op <= OP_POW:
                b = self.sval[sp]
                gb = &self.sgrad[sp * n]
                sp -= 1
                a = self.sval[sp]
                ga = &self.sgrad[sp * n]
                if op == OP_ADD:
                    self.sval[sp] = a + b
                    if want_grad:
                        for j in range(n):
                            ga[j] = ga[j] + gb[j]
                elif op == OP_SUB:
                    self.sval[sp] = a - b
                    if want_grad:
                        for j in range(n):
                            ga[j] = ga[j] - gb[j]
                elif op == OP_MUL:
                    self.sval[sp] = a * b
                    if want_grad:
                        for j in range(n):
                            ga[j] = ga[j] * b + gb[j] * a
                elif op == OP_DIV:
                    if b == 0.0:
                        return S_DOMAIN
                    v = a / b
                    self.sval[sp] = v
                    if want_grad:
                        for j in range(n):
                            ga[j] = (ga[j] - gb[j] * v) / b
                else:
                    gb_nonzero = False
                    if want_grad:
                        for j in range(n):
                            if gb[j] != 0.0:
                                gb_nonzero = True
                    if gb_nonzero:
                        if a <= 0.0:
                            return S_DOMAIN
                        la = log(a)
                        v = exp(b * la)
                        for j in range(n):
                            ga[j] = v * (gb[j] * la + ga[j] * (b / a))
                    else:
                        if (a == 0.0 and b < 0.0) or (a < 0.0 and b != floor(b)):
                            return S_DOMAIN
                        v = pow(a, b)
                        if want_grad:
                            if b == 0.0:
                                memset(ga, 0, n * sizeof(double))
                            else:
                                d = b * pow(a, b - 1.0)
                                for j in range(n):
                                    ga[j] = ga[j] * d
                    self.sval[sp] = v
            else:
                a = self.sval[sp]
                if op == OP_SIN:
                    v = sin(a)
                    d = cos(a)
                elif op == OP_COS:
                    v = cos(a)
                    d = -sin(a)
                elif op == OP_TAN:
                    v = tan(a)
                    d = 1.0 + v * v
                elif op == OP_EXP:
                    if a > 709.0:
                        return S_DOMAIN
                    v = exp(a)
                    d = v
                elif op == OP_LOG:
                    if a <= 0.0:
                        return S_DOMAIN
                    v = log(a)
                    d = 1.0 / a
                elif op == OP_SQRT:
                    if a < 0.0:
                        return S_DOMAIN
                    v = sqrt(a)
                    d = 0.5 / v if v > 0.0 else 0.0
                else:
                    v = fabs(a)
                    d = 1.0 if a > 0.0 else (-1.0 if a < 0.0 else 0.0)
                self.sval[sp] = v
                if want_grad:
                    for j in range(n):
                        self.sgrad[sp * n + j] = self.sgrad[sp * n + j] * d
        out[0] = self.sval[0]
        if want_grad:
            memcpy(grad, self.sgrad, n * sizeof(double))
        return S_OK

    cdef int block(self, int first, int rows, int cols, double* val, double* dval) noexcept nogil:
        # dval[l*rows*cols + r*cols + c]
        cdef int n = self.n
        cdef int r, c, l, st
        cdef double* g = self.work
        for r in range(rows):
            for c in range(cols):
                st = self.run(first + r * cols + c, &val[r * cols + c], g, True)
                if st != S_OK:
                    return st
                for l in range(n):
                    dval[l * rows * cols + r * cols + c] = g[l]
        return S_OK

    cdef int fields(self, double* q, double* v) noexcept nogil:
        cdef int n = self.n, m = self.m, k = self.k
        cdef int i, st
        cdef double dummy
        for i in range(n):
            self.point[i] = q[i]
            self.point[n + i] = v[i]
        st = self.block(0, n, n, self.M, self.dM)
        if st != S_OK:
            return st
        if self.has_potential:
            st = self.run(n * n, &self.V, self.gV, True)
            if st != S_OK:
                return st
        else:
            self.V = 0.0
            memset(self.gV, 0, n * sizeof(double))
        st = self.block(n * n + 1, m, n, self.C, self.dC)
        if st != S_OK:
            return st
        st = self.block(n * n + 1 + m * n, k, n, self.F, self.dF)
        if st != S_OK:
            return st
        if self.has_force:
            for i in range(n):
                st = self.run(n * n + 1 + m * n + k * n + i, &self.f0[i], &dummy, False)
                if st != S_OK:
                    return st
        else:
            memset(self.f0, 0, n * sizeof(double))
        return S_OK

    # ------------------------------------------------------------------
    # linear algebra helpers (row-major, tiny sizes)

    cdef int invert_metric(self) noexcept nogil:
        cdef int n = self.n
        cdef int i, j, p
        cdef double s
        cdef double* L = self.L
        cdef double* col = self.work
        cdef double* y = self.work + n
        for i in range(n):
            for j in range(i + 1):
                s = self.M[i * n + j]
                for p in range(j):
                    s -= L[i * n + p] * L[j * n + p]
                if i == j:
                    if not (s > 0.0):
                        return S_NOT_PD
                    L[i * n + i] = sqrt(s)
                else:
                    L[i * n + j] = s / L[j * n + j]
        for j in range(n):
            # solve L L^T x = e_j
            for i in range(n):
                s = 1.0 if i == j else 0.0
                for p in range(i):
                    s -= L[i * n + p] * y[p]
                y[i] = s / L[i * n + i]
            for i in range(n - 1, -1, -1):
                s = y[i]
                for p in range(i + 1, n):
                    s -= L[p * n + i] * col[p]
                col[i] = s / L[i * n + i]
            for i in range(n):
                self.Minv[i * n + j] = col[i]
        return S_OK

    cdef void gam(self, double* a, double* b, double* out, double* tmp) noexcept nogil:
        # out = Gamma(a, b) = 1/2 Minv (dM_a b + dM_b a - (a_i d_l M_ij b_j)_l)
        cdef int n = self.n
        cdef int l, i, j
        cdef double s, t
        for i in range(n):
            tmp[i] = 0.0
        for l in range(n):
            t = 0.0
            for i in range(n):
                for j in range(n):
                    s = self.dM[l * n * n + i * n + j]
                    tmp[i] += 0.5 * (a[l] * s * b[j] + b[l] * s * a[j])
                    t += a[i] * s * b[j]
            tmp[l] -= 0.5 * t
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += self.Minv[i * n + j] * tmp[j]
            out[i] = s

    # ------------------------------------------------------------------
    # accelerations

    cdef int accel(self, double* q, double* v, int formulation, double stabilize,
                   double* acc, double* u) noexcept nogil:
        cdef int n = self.n, m = self.m, k = self.k
        cdef int st, i, j, l, p, c, r, nb, piv
        cdef double s, t, scale, normC, normY, maxabs, cutoff, big
        cdef double* F
        cdef double* dF
        st = self.fields(q, v)
        if st != S_OK:
            return st
        st = self.invert_metric()
        if st != S_OK:
            return st
        # carve workspace
        cdef double* w = self.work
        cdef double* g = w
        w += n
        cdef double* tmp = w
        w += n
        cdef double* ext = w
        w += n
        cdef double* a0 = w
        w += n
        cdef double* Y = w  # n x m (uses m columns; k == m here)
        w += n * m
        cdef double* A = w
        w += m * m
        cdef double* B = w  # right-hand sides: [rhs | C | extra]
        w += m * (n + 2)
        cdef double* dCv = w
        w += m * n
        cdef double* dMv = w
        w += n * n
        cdef double* dYv = w
        w += n * m
        cdef double* dAv = w
        w += m * m
        cdef double* Wv = w
        w += m
        cdef double* PFv = w
        w += n
        cdef double* h = w
        w += n
        cdef double* h2 = w
        w += m
        cdef double* Wg = w
        w += m
        cdef double* LU = w
        w += m * m
        cdef int* perm = <int*> w
        w += m + 1
        self.gam(v, v, g, tmp)
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += self.Minv[i * n + j] * self.gV[j]
            ext[i] = self.f0[i] - s
            a0[i] = -g[i] + ext[i]
        nb = k if formulation != F_NONHOLONOMIC else m
        if formulation == F_UNCONTROLLED or m == 0:
            for i in range(n):
                acc[i] = a0[i]
            for i in range(nb):
                u[i] = 0.0
            return S_OK
        if formulation == F_NONHOLONOMIC:
            F = self.C
            dF = self.dC
        else:
            if k != m:
                return S_SINGULAR
            F = self.F
            dF = self.dF
        # Y = Minv F^T (n x m), A = C Y
        for i in range(n):
            for c in range(m):
                s = 0.0
                for j in range(n):
                    s += self.Minv[i * n + j] * F[c * n + j]
                Y[i * m + c] = s
        normC = 0.0
        normY = 0.0
        maxabs = 0.0
        for i in range(m * n):
            normC += self.C[i] * self.C[i]
            normY += Y[i] * Y[i]
        for r in range(m):
            for c in range(m):
                s = 0.0
                for j in range(n):
                    s += self.C[r * n + j] * Y[j * m + c]
                A[r * m + c] = s
                if fabs(s) > maxabs:
                    maxabs = fabs(s)
        scale = sqrt(normC) * sqrt(normY)
        cutoff = _PIVOT_RTOL * (maxabs if maxabs > scale else scale)
        # dC_v (m x n)
        for r in range(m):
            for j in range(n):
                s = 0.0
                for l in range(n):
                    s += v[l] * self.dC[l * m * n + r * n + j]
                dCv[r * n + j] = s
        # B = [rhs | C] with rhs = -(dC_v v + C a0) - stabilize C v
        nb = n + 2
        for r in range(m):
            s = 0.0
            t = 0.0
            for j in range(n):
                s += dCv[r * n + j] * v[j] + self.C[r * n + j] * a0[j]
                t += self.C[r * n + j] * v[j]
            B[r * nb] = -s
            if formulation == F_CLOSED_LOOP:
                B[r * nb] -= stabilize * t
            for j in range(n):
                B[r * nb + 1 + j] = self.C[r * n + j]
            B[r * nb + n + 1] = 0.0
        # LU with partial pivoting
        for i in range(m * m):
            LU[i] = A[i]
        for c in range(m):
            piv = c
            big = fabs(LU[c * m + c])
            for r in range(c + 1, m):
                if fabs(LU[r * m + c]) > big:
                    big = fabs(LU[r * m + c])
                    piv = r
            if big <= cutoff:
                return S_SINGULAR
            perm[c] = piv
            if piv != c:
                for j in range(m):
                    s = LU[c * m + j]; LU[c * m + j] = LU[piv * m + j]; LU[piv * m + j] = s
            for r in range(c + 1, m):
                LU[r * m + c] /= LU[c * m + c]
                for j in range(c + 1, m):
                    LU[r * m + j] -= LU[r * m + c] * LU[c * m + j]
        self.lu_solve(LU, perm, B, nb, nb)
        # B column 0 holds tau, columns 1..n hold W = A^-1 C
        for r in range(m):
            u[r] = B[r * nb]
        if formulation == F_CLOSED_LOOP:
            for i in range(n):
                s = 0.0
                for c in range(m):
                    s += Y[i * m + c] * u[c]
                acc[i] = a0[i] + s
            return S_OK
        # induced connection: P_D g + (dP_F)_v v + Gamma(v, P_F v); forcing P_D ext
        for i in range(n):
            for j in range(n):
                s = 0.0
                for l in range(n):
                    s += v[l] * self.dM[l * n * n + i * n + j]
                dMv[i * n + j] = s
        # dY_v = Minv (dF_v^T - dM_v Y)
        for c in range(m):
            for j in range(n):
                s = 0.0
                for l in range(n):
                    s += v[l] * dF[l * m * n + c * n + j]
                h[j] = s          # (dF_v)[c, :]
            for j in range(n):
                s = 0.0
                for l in range(n):
                    s += dMv[j * n + l] * Y[l * m + c]
                tmp[j] = s        # (dM_v Y)[:, c]
            for i in range(n):
                s = 0.0
                for j in range(n):
                    s += self.Minv[i * n + j] * (h[j] - tmp[j])
                dYv[i * m + c] = s
        # dA_v = dC_v Y + C dY_v
        for r in range(m):
            for c in range(m):
                s = 0.0
                for j in range(n):
                    s += dCv[r * n + j] * Y[j * m + c] + self.C[r * n + j] * dYv[j * m + c]
                dAv[r * m + c] = s
        # Wv = W v, Wg = W g, W ext in h2
        for r in range(m):
            s = 0.0
            t = 0.0
            big = 0.0
            for j in range(n):
                s += B[r * nb + 1 + j] * v[j]
                t += B[r * nb + 1 + j] * g[j]
                big += B[r * nb + 1 + j] * ext[j]
            Wv[r] = s
            Wg[r] = t
            h2[r] = big
        # right-hand side for dW_v v: dC_v v - dA_v Wv, solved in place (column n+1)
        for r in range(m):
            s = 0.0
            for j in range(n):
                s += dCv[r * n + j] * v[j]
            for c in range(m):
                s -= dAv[r * m + c] * Wv[c]
            B[r * nb + n + 1] = s
        self.lu_solve_col(LU, perm, B, nb, n + 1)
        for i in range(n):
            s = 0.0
            for c in range(m):
                s += Y[i * m + c] * Wv[c]
            PFv[i] = s
        self.gam(v, PFv, h, tmp)
        for i in range(n):
            s = g[i] + h[i] - ext[i]
            for c in range(m):
                s += -Y[i * m + c] * Wg[c] + dYv[i * m + c] * Wv[c] \
                     + Y[i * m + c] * B[c * nb + n + 1] + Y[i * m + c] * h2[c]
            acc[i] = -s
        return S_OK

    cdef void lu_solve(self, double* LU, int* perm, double* B, int nb, int ncols) noexcept nogil:
        cdef int c
        for c in range(ncols):
            self.lu_solve_col(LU, perm, B, nb, c)

    cdef void lu_solve_col(self, double* LU, int* perm, double* B, int nb, int col) noexcept nogil:
        cdef int m = self.m
        cdef int r, j
        cdef double s
        for r in range(m):
            if perm[r] != r:
                s = B[r * nb + col]; B[r * nb + col] = B[perm[r] * nb + col]; B[perm[r] * nb + col] = s
        for r in range(m):
            s = B[r * nb + col]
            for j in range(r):
                s -= LU[r * m + j] * B[j * nb + col]
            B[r * nb + col] = s
        for r in range(m - 1, -1, -1):
            s = B[r * nb + col]
            for j in range(r + 1, m):
                s -= LU[r * m + j] * B[j * nb + col]
            B[r * nb + col] = s / LU[r * m + r]

    cdef double energy_c(self, double* v) noexcept nogil:
        # uses the fields from the latest evaluation
        cdef int n = self.n
        cdef int i, j
        cdef double s = 0.0
        for i in range(n):
            for j in range(n):
                s += v[i] * self.M[i * n + j] * v[j]
        return 0.5 * s + self.V

    # ------------------------------------------------------------------
    # Python API

    def acceleration(self, q, v, int formulation, double stabilize=0.0):
        """``(qddot, u)``; raises ``KernelError`` on failure."""
        cdef double[::1] qq = np.ascontiguousarray(q, dtype=np.float64)
        cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
        nu = self.m if formulation == F_NONHOLONOMIC else self.k
        acc = np.zeros(self.n)
        u = np.zeros(max(nu, self.m, 1))
        cdef double[::1] a_ = acc
        cdef double[::1] u_ = u
        cdef int st, i
        with nogil:
            st = self.accel(&qq[0], &vv[0], formulation, stabilize, &a_[0], &u_[0])
        if st != S_OK:
            raise KernelError(st)
        for i in range(self.n):
            if not isfinite(a_[i]):
                raise KernelError(S_NONFINITE)
        return acc, u[:nu].copy()

    def energy(self, q, v):
        cdef double[::1] qq = np.ascontiguousarray(q, dtype=np.float64)
        cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
        st = self.fields(&qq[0], &vv[0])
        if st != S_OK:
            raise KernelError(st)
        return self.energy_c(&vv[0])

    def constraint_values(self, q, v):
        cdef double[::1] qq = np.ascontiguousarray(q, dtype=np.float64)
        cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
        st = self.fields(&qq[0], &vv[0])
        if st != S_OK:
            raise KernelError(st)
        out = np.zeros(self.m)
        cdef int r, j
        cdef double s
        for r in range(self.m):
            s = 0.0
            for j in range(self.n):
                s += self.C[r * self.n + j] * vv[j]
            out[r] = s
        return out

    def integrate_rk4(self, q0, v0, double dt, int nsteps, int formulation, double stabilize=0.0):
        """Fixed-step RK4; returns ``(Q, V, U, PHI, E, status, nvalid)``."""
        cdef int n = self.n, m = self.m
        cdef int nu = m if formulation == F_NONHOLONOMIC else self.k
        Q_ = np.zeros((nsteps + 1, n))
        V_ = np.zeros((nsteps + 1, n))
        U_ = np.zeros((nsteps + 1, nu))
        P_ = np.zeros((nsteps + 1, m))
        E_ = np.zeros(nsteps + 1)
        cdef double[:, ::1] Q = Q_
        cdef double[:, ::1] V = V_
        cdef double[:, ::1] U = U_
        cdef double[:, ::1] PHI = P_
        cdef double[::1] E = E_
        st_arr = np.zeros(9 * n + 2 * max(nu, m, 1))
        cdef double[::1] buf = st_arr
        cdef double* q = &buf[0]
        cdef double* v = q + n
        cdef double* a1 = v + n
        cdef double* a2 = a1 + n
        cdef double* a3 = a2 + n
        cdef double* a4 = a3 + n
        cdef double* qs = a4 + n
        cdef double* vs = qs + n
        cdef double* ctl = vs + n
        cdef double* ctl2 = ctl + max(nu, m, 1)
        cdef double[::1] q0v = np.ascontiguousarray(q0, dtype=np.float64)
        cdef double[::1] v0v = np.ascontiguousarray(v0, dtype=np.float64)
        cdef int i, j, r, st = S_OK, filled = 0
        cdef double hh = dt, s
        with nogil:
            for j in range(n):
                q[j] = q0v[j]
                v[j] = v0v[j]
            st = self.accel(q, v, formulation, stabilize, a1, ctl)
            i = 0
            while st == S_OK:
                # record sample i (fields hold the evaluation at (q, v))
                self.fields(q, v)
                for j in range(n):
                    Q[i, j] = q[j]
                    V[i, j] = v[j]
                for j in range(nu):
                    U[i, j] = ctl[j]
                for r in range(m):
                    s = 0.0
                    for j in range(n):
                        s += self.C[r * n + j] * v[j]
                    PHI[i, r] = s
                E[i] = self.energy_c(v)
                filled = i + 1
                if i == nsteps:
                    break
                for j in range(n):
                    qs[j] = q[j] + 0.5 * hh * v[j]
                    vs[j] = v[j] + 0.5 * hh * a1[j]
                st = self.accel(qs, vs, formulation, stabilize, a2, ctl2)
                if st != S_OK:
                    break
                for j in range(n):
                    qs[j] = q[j] + 0.5 * hh * (v[j] + 0.5 * hh * a1[j])
                    vs[j] = v[j] + 0.5 * hh * a2[j]
                st = self.accel(qs, vs, formulation, stabilize, a3, ctl2)
                if st != S_OK:
                    break
                for j in range(n):
                    qs[j] = q[j] + hh * (v[j] + 0.5 * hh * a2[j])
                    vs[j] = v[j] + hh * a3[j]
                st = self.accel(qs, vs, formulation, stabilize, a4, ctl2)
                if st != S_OK:
                    break
                for j in range(n):
                    # stage velocities: v, v + h/2 a1, v + h/2 a2, v + h a3
                    q[j] = q[j] + (hh / 6.0) * (
                        v[j] + 2.0 * (v[j] + 0.5 * hh * a1[j]) + 2.0 * (v[j] + 0.5 * hh * a2[j])
                        + (v[j] + hh * a3[j]))
                    v[j] = v[j] + (hh / 6.0) * (a1[j] + 2.0 * a2[j] + 2.0 * a3[j] + a4[j])
                for j in range(n):
                    if not (isfinite(q[j]) and isfinite(v[j])):
                        st = S_NONFINITE
                if st != S_OK:
                    break
                st = self.accel(q, v, formulation, stabilize, a1, ctl)
                if st == S_OK:
                    for j in range(n):
                        if not isfinite(a1[j]):
                            st = S_NONFINITE
                i += 1
        return Q_, V_, U_, P_, E_, st, filled
