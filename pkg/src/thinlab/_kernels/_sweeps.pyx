# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Red-black projected SOR sweeps (compiled path).

Arrays are padded with a one-node ghost ring so neighbor access is
branch-free; ghost entries carry zero weights and free=0.  Edge weight
conventions: wy[i,k] (resp. wx/wy/wz in 3-D) is the weight of the edge
from node (i,k) to its +1 neighbor along that axis, zero where no edge.
diag is the sum of the incident edge weights.

The nodewise update minimizes

    sum_e w_e (v - u_nb)^2 + q*((psi - v)+)^2 - b*v

exactly (rhs2 = b/2).  Plain nodes are over-relaxed by omega; nodes whose
one-sided penalty branch is active take the exact minimizer (omega_eff=1)
so the energy decreases monotonically.  Bounds are applied last.
"""


def psor_sweep_2d(double[:, ::1] u,
                  double[:, ::1] wy, double[:, ::1] wz,
                  double[:, ::1] diag, double[:, ::1] rhs2,
                  double[:, ::1] qpen, double[:, ::1] psi,
                  double[:, ::1] lower, double[:, ::1] upper,
                  unsigned char[:, ::1] free, double omega, int color):
    cdef Py_ssize_t ny = u.shape[0] - 2
    cdef Py_ssize_t nz = u.shape[1] - 2
    cdef Py_ssize_t i, k, kstart
    cdef double S, ustar, un, d, q
    with nogil:
        for i in range(1, ny + 1):
            kstart = 1 + ((i + 1 + color) & 1)
            for k in range(kstart, nz + 1, 2):
                if free[i, k]:
                    S = (wy[i - 1, k] * u[i - 1, k] + wy[i, k] * u[i + 1, k]
                         + wz[i, k - 1] * u[i, k - 1] + wz[i, k] * u[i, k + 1])
                    d = diag[i, k]
                    ustar = (S + rhs2[i, k]) / d
                    q = qpen[i, k]
                    if q > 0.0 and ustar < psi[i, k]:
                        un = (S + rhs2[i, k] + q * psi[i, k]) / (d + q)
                    else:
                        un = u[i, k] + omega * (ustar - u[i, k])
                    if un < lower[i, k]:
                        un = lower[i, k]
                    if un > upper[i, k]:
                        un = upper[i, k]
                    u[i, k] = un


def psor_sweep_3d(double[:, :, ::1] u,
                  double[:, :, ::1] wx, double[:, :, ::1] wy,
                  double[:, :, ::1] wz, double[:, :, ::1] diag,
                  double[:, :, ::1] rhs2, double[:, :, ::1] qpen,
                  double[:, :, ::1] psi, double[:, :, ::1] lower,
                  double[:, :, ::1] upper, unsigned char[:, :, ::1] free,
                  double omega, int color):
    cdef Py_ssize_t nx = u.shape[0] - 2
    cdef Py_ssize_t ny = u.shape[1] - 2
    cdef Py_ssize_t nz = u.shape[2] - 2
    cdef Py_ssize_t i, j, k, kstart
    cdef double S, ustar, un, d, q
    with nogil:
        for i in range(1, nx + 1):
            for j in range(1, ny + 1):
                kstart = 1 + ((i + j + 1 + color) & 1)
                for k in range(kstart, nz + 1, 2):
                    if free[i, j, k]:
                        S = (wx[i - 1, j, k] * u[i - 1, j, k]
                             + wx[i, j, k] * u[i + 1, j, k]
                             + wy[i, j - 1, k] * u[i, j - 1, k]
                             + wy[i, j, k] * u[i, j + 1, k]
                             + wz[i, j, k - 1] * u[i, j, k - 1]
                             + wz[i, j, k] * u[i, j, k + 1])
                        d = diag[i, j, k]
                        ustar = (S + rhs2[i, j, k]) / d
                        q = qpen[i, j, k]
                        if q > 0.0 and ustar < psi[i, j, k]:
                            un = (S + rhs2[i, j, k] + q * psi[i, j, k]) / (d + q)
                        else:
                            un = u[i, j, k] + omega * (ustar - u[i, j, k])
                        if un < lower[i, j, k]:
                            un = lower[i, j, k]
                        if un > upper[i, j, k]:
                            un = upper[i, j, k]
                        u[i, j, k] = un


def psor_sweep_3d_plain(double[:, :, ::1] u,
                        double[:, :, ::1] wx, double[:, :, ::1] wy,
                        double[:, :, ::1] wz, double[:, :, ::1] diag,
                        unsigned char[:, :, ::1] free,
                        double omega, int color, double lo, double hi):
    # no source, no penalty, scalar bounds: the capacity workhorse, kept
    # array-lean because 3-D grids dominate memory
    cdef Py_ssize_t nx = u.shape[0] - 2
    cdef Py_ssize_t ny = u.shape[1] - 2
    cdef Py_ssize_t nz = u.shape[2] - 2
    cdef Py_ssize_t i, j, k, kstart
    cdef double S, un
    with nogil:
        for i in range(1, nx + 1):
            for j in range(1, ny + 1):
                kstart = 1 + ((i + j + 1 + color) & 1)
                for k in range(kstart, nz + 1, 2):
                    if free[i, j, k]:
                        S = (wx[i - 1, j, k] * u[i - 1, j, k]
                             + wx[i, j, k] * u[i + 1, j, k]
                             + wy[i, j - 1, k] * u[i, j - 1, k]
                             + wy[i, j, k] * u[i, j + 1, k]
                             + wz[i, j, k - 1] * u[i, j, k - 1]
                             + wz[i, j, k] * u[i, j, k + 1])
                        un = u[i, j, k] + omega * (S / diag[i, j, k] - u[i, j, k])
                        if un < lo:
                            un = lo
                        if un > hi:
                            un = hi
                        u[i, j, k] = un
