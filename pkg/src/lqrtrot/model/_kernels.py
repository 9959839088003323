"""Compiled rigid-body kernels.

All kernels work on plain arrays so numba can compile them.  Spatial vectors
use the angular-first convention ``[w; v]`` and are expressed in link
coordinates.  Generalized velocities at this level are *body* velocities
``nu_b = [w_B; v_B; qd]``; the mixed-frame conversion (linear part in the
inertial frame) happens in :func:`mixed_rows` and :func:`mixed_vec`.

Link 0 is the floating base.  Link ``i > 0`` carries revolute joint ``i - 1``
whose velocity index is ``5 + i``.  Links are topologically ordered.

Small 3x3 / 6-vector algebra is written out as loops: at these sizes a BLAS
call costs more than the arithmetic.
"""
import numpy as np
from numba import njit

CACHE = True


@njit(cache=CACHE, inline="always")
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=CACHE, inline="always")
def _mv3(A, x, out):
    for i in range(3):
        out[i] = A[i, 0] * x[0] + A[i, 1] * x[1] + A[i, 2] * x[2]


@njit(cache=CACHE, inline="always")
def _mtv3(A, x, out):
    for i in range(3):
        out[i] = A[0, i] * x[0] + A[1, i] * x[1] + A[2, i] * x[2]


@njit(cache=CACHE)
def _mm3(A, B):
    C = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            C[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]
    return C


@njit(cache=CACHE)
def skew(a):
    out = np.zeros((3, 3))
    out[0, 1] = -a[2]
    out[0, 2] = a[1]
    out[1, 0] = a[2]
    out[1, 2] = -a[0]
    out[2, 0] = -a[1]
    out[2, 1] = a[0]
    return out


@njit(cache=CACHE)
def quat_to_rot(qt):
    w, x, y, z = qt[0], qt[1], qt[2], qt[3]
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[0, 1] = 2.0 * (x * y - w * z)
    R[0, 2] = 2.0 * (x * z + w * y)
    R[1, 0] = 2.0 * (x * y + w * z)
    R[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[1, 2] = 2.0 * (y * z - w * x)
    R[2, 0] = 2.0 * (x * z - w * y)
    R[2, 1] = 2.0 * (y * z + w * x)
    R[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


@njit(cache=CACHE)
def axis_rot(axis, angle):
    c = np.cos(angle)
    s = np.sin(angle)
    x, y, z = axis[0], axis[1], axis[2]
    t = 1.0 - c
    R = np.empty((3, 3))
    R[0, 0] = c + t * x * x
    R[0, 1] = t * x * y - s * z
    R[0, 2] = t * x * z + s * y
    R[1, 0] = t * x * y + s * z
    R[1, 1] = c + t * y * y
    R[1, 2] = t * y * z - s * x
    R[2, 0] = t * x * z - s * y
    R[2, 1] = t * y * z + s * x
    R[2, 2] = c + t * z * z
    return R


@njit(cache=CACHE)
def link_transforms(parent, RT, pT, axis, base_pos, quat, qj):
    """World placements of every link plus parent->child rotations.

    ``Eup[i]`` maps parent coordinates to link ``i`` coordinates; the link
    origin sits at ``pT[i]`` in parent coordinates.
    """
    nb = parent.shape[0]
    Rw = np.empty((nb, 3, 3))
    pw = np.empty((nb, 3))
    Eup = np.empty((nb, 3, 3))
    Rw[0] = quat_to_rot(quat)
    pw[0] = base_pos
    Eup[0] = np.eye(3)
    tmp = np.empty(3)
    for i in range(1, nb):
        p = parent[i]
        Rj = _mm3(RT[i], axis_rot(axis[i], qj[i - 1]))
        Rw[i] = _mm3(Rw[p], Rj)
        _mv3(Rw[p], pT[i], tmp)
        for k in range(3):
            pw[i, k] = pw[p, k] + tmp[k]
        Eup[i] = Rj.T
    return Rw, pw, Eup


@njit(cache=CACHE, inline="always")
def _xmotion(E, r, m, out):
    """Apply the parent->child Plucker transform to motion vector ``m``."""
    # w' = E w ; v' = E (v - r x w)
    w0, w1, w2 = m[0], m[1], m[2]
    t0 = m[3] - (r[1] * w2 - r[2] * w1)
    t1 = m[4] - (r[2] * w0 - r[0] * w2)
    t2 = m[5] - (r[0] * w1 - r[1] * w0)
    for i in range(3):
        out[i] = E[i, 0] * w0 + E[i, 1] * w1 + E[i, 2] * w2
        out[3 + i] = E[i, 0] * t0 + E[i, 1] * t1 + E[i, 2] * t2


@njit(cache=CACHE, inline="always")
def _xforce_t(E, r, f, out):
    """Map a child force to parent coordinates (transpose transform)."""
    l0 = E[0, 0] * f[3] + E[1, 0] * f[4] + E[2, 0] * f[5]
    l1 = E[0, 1] * f[3] + E[1, 1] * f[4] + E[2, 1] * f[5]
    l2 = E[0, 2] * f[3] + E[1, 2] * f[4] + E[2, 2] * f[5]
    n0 = E[0, 0] * f[0] + E[1, 0] * f[1] + E[2, 0] * f[2]
    n1 = E[0, 1] * f[0] + E[1, 1] * f[1] + E[2, 1] * f[2]
    n2 = E[0, 2] * f[0] + E[1, 2] * f[1] + E[2, 2] * f[2]
    out[0] = n0 + r[1] * l2 - r[2] * l1
    out[1] = n1 + r[2] * l0 - r[0] * l2
    out[2] = n2 + r[0] * l1 - r[1] * l0
    out[3] = l0
    out[4] = l1
    out[5] = l2


@njit(cache=CACHE, inline="always")
def _inertia_apply(m, hc, Ib, x, out):
    """Spatial inertia (mass, first moment, rotational inertia about origin)."""
    w0, w1, w2, v0, v1, v2 = x[0], x[1], x[2], x[3], x[4], x[5]
    h0, h1, h2 = hc[0], hc[1], hc[2]
    out[0] = Ib[0, 0] * w0 + Ib[0, 1] * w1 + Ib[0, 2] * w2 + h1 * v2 - h2 * v1
    out[1] = Ib[1, 0] * w0 + Ib[1, 1] * w1 + Ib[1, 2] * w2 + h2 * v0 - h0 * v2
    out[2] = Ib[2, 0] * w0 + Ib[2, 1] * w1 + Ib[2, 2] * w2 + h0 * v1 - h1 * v0
    out[3] = m * v0 - (h1 * w2 - h2 * w1)
    out[4] = m * v1 - (h2 * w0 - h0 * w2)
    out[5] = m * v2 - (h0 * w1 - h1 * w0)


@njit(cache=CACHE)
def inertia_params(I6):
    """Split stacked 6x6 spatial inertias into (mass, h, I_origin)."""
    nb = I6.shape[0]
    m = np.empty(nb)
    h = np.empty((nb, 3))
    Ib = np.empty((nb, 3, 3))
    for i in range(nb):
        m[i] = I6[i, 3, 3]
        h[i, 0] = I6[i, 2, 4]
        h[i, 1] = I6[i, 0, 5]
        h[i, 2] = I6[i, 1, 3]
        Ib[i] = I6[i, :3, :3]
    return m, h, Ib


@njit(cache=CACHE)
def link_motion(parent, pT, axis, Eup, nu_b, acc_b, a0_extra):
    """Per-link spatial velocity and acceleration (link coordinates)."""
    nb = parent.shape[0]
    v = np.zeros((nb, 6))
    a = np.zeros((nb, 6))
    v[0] = nu_b[:6]
    a[0] = acc_b[:6]
    for k in range(3):
        a[0, 3 + k] += a0_extra[k]
    t = np.empty(6)
    c = np.empty(3)
    for i in range(1, nb):
        p = parent[i]
        qd = nu_b[5 + i]
        qdd = acc_b[5 + i]
        _xmotion(Eup[i], pT[i], v[p], t)
        for k in range(3):
            v[i, k] = t[k] + axis[i, k] * qd
            v[i, 3 + k] = t[3 + k]
        _xmotion(Eup[i], pT[i], a[p], t)
        # v x (S qd) = [w x ax qd ; v x ax qd]
        _cross(v[i, :3], axis[i], c)
        for k in range(3):
            a[i, k] = t[k] + axis[i, k] * qdd + c[k] * qd
        _cross(v[i, 3:], axis[i], c)
        for k in range(3):
            a[i, 3 + k] = t[3 + k] + c[k] * qd
    return v, a


@njit(cache=CACHE)
def rnea(parent, pT, axis, I6, Eup, nu_b, acc_b, gravity_body):
    """Recursive Newton-Euler pass; generalized force in body coordinates.

    ``acc_b`` is the base spatial acceleration followed by joint
    accelerations; ``gravity_body`` is the gravity vector in base coordinates.
    """
    nb = parent.shape[0]
    nv = nu_b.shape[0]
    m, hc, Ib = inertia_params(I6)
    g = -gravity_body
    v, a = link_motion(parent, pT, axis, Eup, nu_b, acc_b, g)
    f = np.zeros((nb, 6))
    Iv = np.empty(6)
    Ia = np.empty(6)
    c = np.empty(3)
    for i in range(nb):
        _inertia_apply(m[i], hc[i], Ib[i], v[i], Iv)
        _inertia_apply(m[i], hc[i], Ib[i], a[i], Ia)
        # f = I a + v xf (I v) = I a + [w x n + v x f ; w x f]
        _cross(v[i, :3], Iv[:3], c)
        for k in range(3):
            f[i, k] = Ia[k] + c[k]
        _cross(v[i, 3:], Iv[3:], c)
        for k in range(3):
            f[i, k] += c[k]
        _cross(v[i, :3], Iv[3:], c)
        for k in range(3):
            f[i, 3 + k] = Ia[3 + k] + c[k]
    tau = np.zeros(nv)
    t = np.empty(6)
    for i in range(nb - 1, 0, -1):
        p = parent[i]
        tau[5 + i] = axis[i, 0] * f[i, 0] + axis[i, 1] * f[i, 1] + axis[i, 2] * f[i, 2]
        _xforce_t(Eup[i], pT[i], f[i], t)
        for k in range(6):
            f[p, k] += t[k]
    tau[:6] = f[0]
    return tau


@njit(cache=CACHE)
def crba(parent, pT, axis, I6, Eup):
    """Composite-rigid-body mass matrix in body coordinates."""
    nb = parent.shape[0]
    nv = nb + 5
    m, hc, Ib = inertia_params(I6)
    # composite inertias accumulated leaf to root in parent coordinates
    for i in range(nb - 1, 0, -1):
        p = parent[i]
        E = Eup[i]
        r = pT[i]
        h2 = np.empty(3)
        _mtv3(E, hc[i], h2)
        I2 = _mm3(np.ascontiguousarray(E.T), _mm3(Ib[i], E))
        # I_p = I' - r x h' x - (h' + m r) x r x
        Rx = skew(r)
        H = skew(h2)
        hm = h2 + m[i] * r
        Ib[p] += I2 - _mm3(Rx, H) - _mm3(skew(hm), Rx)
        hc[p] += hm
        m[p] += m[i]
    M = np.zeros((nv, nv))
    M[:3, :3] = Ib[0]
    Hx = skew(hc[0])
    M[:3, 3:6] = Hx
    M[3:6, :3] = Hx.T
    for k in range(3):
        M[3 + k, 3 + k] = m[0]
    F = np.empty(6)
    F2 = np.empty(6)
    x = np.zeros(6)
    for i in range(1, nb):
        for k in range(3):
            x[k] = axis[i, k]
        _inertia_apply(m[i], hc[i], Ib[i], x, F)
        ii = 5 + i
        M[ii, ii] = axis[i, 0] * F[0] + axis[i, 1] * F[1] + axis[i, 2] * F[2]
        j = i
        while parent[j] > 0:
            _xforce_t(Eup[j], pT[j], F, F2)
            F[:] = F2
            j = parent[j]
            val = axis[j, 0] * F[0] + axis[j, 1] * F[1] + axis[j, 2] * F[2]
            M[ii, 5 + j] = val
            M[5 + j, ii] = val
        _xforce_t(Eup[j], pT[j], F, F2)
        for k in range(6):
            M[k, ii] = F2[k]
            M[ii, k] = F2[k]
    return M


@njit(cache=CACHE)
def body_to_mixed(R, nu_m):
    """Return ``nu_b`` and ``G_dot @ nu_m`` (nonzero only in the base rows)."""
    nu_b = nu_m.copy()
    vB = np.empty(3)
    _mtv3(R, nu_m[0:3], vB)
    for k in range(3):
        nu_b[k] = nu_m[3 + k]
        nu_b[3 + k] = vB[k]
    gdot = np.zeros(nu_m.shape[0])
    c = np.empty(3)
    _cross(nu_m[3:6], vB, c)
    for k in range(3):
        gdot[3 + k] = -c[k]
    return nu_b, gdot


@njit(cache=CACHE)
def mixed_rows(R, A):
    """Right-multiply a row block by G, the mixed->body velocity map."""
    out = A.copy()
    for r in range(A.shape[0]):
        for j in range(3):
            out[r, j] = A[r, 3] * R[j, 0] + A[r, 4] * R[j, 1] + A[r, 5] * R[j, 2]
            out[r, 3 + j] = A[r, j]
    return out


@njit(cache=CACHE)
def mixed_vec(R, fb):
    """Left-multiply a body generalized force by G^T."""
    out = fb.copy()
    t = np.empty(3)
    _mv3(R, fb[3:6], t)
    for k in range(3):
        out[k] = t[k]
        out[3 + k] = fb[k]
    return out


@njit(cache=CACHE)
def _mass_mixed(R, Mb):
    tmp = mixed_rows(R, Mb)
    M = mixed_rows(R, np.ascontiguousarray(tmp.T))
    n = M.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.5 * (M[i, j] + M[j, i])
            M[i, j] = s
            M[j, i] = s
    return M


@njit(cache=CACHE)
def mass_matrix_mixed(parent, RT, pT, axis, I6, base_pos, quat, qj):
    Rw, pw, Eup = link_transforms(parent, RT, pT, axis, base_pos, quat, qj)
    return _mass_mixed(Rw[0], crba(parent, pT, axis, I6, Eup))


@njit(cache=CACHE)
def inverse_dynamics_mixed(parent, RT, pT, axis, I6, base_pos, quat, qj, nu_m,
                           qdd_m, gravity):
    """``M qdd + h`` in mixed coordinates."""
    Rw, pw, Eup = link_transforms(parent, RT, pT, axis, base_pos, quat, qj)
    R = Rw[0]
    nu_b, gdot = body_to_mixed(R, nu_m)
    acc_b = gdot.copy()
    t = np.empty(3)
    _mtv3(R, qdd_m[0:3], t)
    for k in range(3):
        acc_b[k] += qdd_m[3 + k]
        acc_b[3 + k] += t[k]
    acc_b[6:] += qdd_m[6:]
    gb = np.empty(3)
    _mtv3(R, gravity, gb)
    return mixed_vec(R, rnea(parent, pT, axis, I6, Eup, nu_b, acc_b, gb))


@njit(cache=CACHE)
def foot_jacobians_mixed(parent, axis, Rw, pw, foot_link, foot_off, nv):
    """Stacked world-frame point Jacobians of all feet in mixed coordinates.

    Built geometrically: a revolute column is ``a_w x (p_foot - p_joint)``,
    base linear columns are the identity and the body angular columns are
    ``-[p_foot - p_base]x R``.
    """
    nf = foot_link.shape[0]
    out = np.zeros((3 * nf, nv))
    aw = np.empty(3)
    d = np.empty(3)
    c = np.empty(3)
    pf = np.empty(3)
    R0 = Rw[0]
    for k in range(nf):
        li = foot_link[k]
        _mv3(Rw[li], foot_off[k], pf)
        for q in range(3):
            pf[q] += pw[li, q]
        for q in range(3):
            out[3 * k + q, q] = 1.0
            d[q] = pf[q] - pw[0, q]
        for col in range(3):
            for q in range(3):
                aw[q] = R0[q, col]
            _cross(aw, d, c)
            for q in range(3):
                out[3 * k + q, 3 + col] = c[q]
        j = li
        while j > 0:
            _mv3(Rw[j], axis[j], aw)
            for q in range(3):
                d[q] = pf[q] - pw[j, q]
            _cross(aw, d, c)
            for q in range(3):
                out[3 * k + q, 5 + j] = c[q]
            j = parent[j]
    return out


@njit(cache=CACHE)
def feet_state(parent, pT, axis, Eup, Rw, pw, foot_link, foot_off, nu_b, acc_b):
    """World position, velocity and classical acceleration of every foot."""
    v, a = link_motion(parent, pT, axis, Eup, nu_b, acc_b, np.zeros(3))
    nf = foot_link.shape[0]
    pos = np.zeros((nf, 3))
    vel = np.zeros((nf, 3))
    acc = np.zeros((nf, 3))
    c = np.empty(3)
    vp = np.empty(3)
    ap = np.empty(3)
    t = np.empty(3)
    for k in range(nf):
        li = foot_link[k]
        r = foot_off[k]
        _cross(v[li, :3], r, c)
        for q in range(3):
            vp[q] = v[li, 3 + q] + c[q]
        _cross(a[li, :3], r, c)
        for q in range(3):
            ap[q] = a[li, 3 + q] + c[q]
        _cross(v[li, :3], vp, c)
        for q in range(3):
            ap[q] += c[q]
        _mv3(Rw[li], r, t)
        for q in range(3):
            pos[k, q] = pw[li, q] + t[q]
        _mv3(Rw[li], vp, t)
        vel[k] = t
        _mv3(Rw[li], ap, t)
        acc[k] = t
    return pos, vel, acc


@njit(cache=CACHE)
def com_state(parent, pT, axis, Eup, Rw, pw, mass, com, nu_b):
    nb = parent.shape[0]
    v, a = link_motion(parent, pT, axis, Eup, nu_b, np.zeros(nu_b.shape[0]), np.zeros(3))
    c = np.zeros(3)
    cd = np.zeros(3)
    mt = 0.0
    t = np.empty(3)
    u = np.empty(3)
    for i in range(nb):
        _mv3(Rw[i], com[i], t)
        for q in range(3):
            c[q] += mass[i] * (pw[i, q] + t[q])
        _cross(v[i, :3], com[i], u)
        for q in range(3):
            u[q] += v[i, 3 + q]
        _mv3(Rw[i], u, t)
        for q in range(3):
            cd[q] += mass[i] * t[q]
        mt += mass[i]
    return c / mt, cd / mt


@njit(cache=CACHE)
def dynamics_terms(parent, RT, pT, axis, I6, foot_link, foot_off, base_pos,
                   quat, qj, nu_m, gravity):
    """Mass matrix, bias vector, feet Jacobian and feet state in one pass."""
    Rw, pw, Eup = link_transforms(parent, RT, pT, axis, base_pos, quat, qj)
    R = Rw[0]
    nv = nu_m.shape[0]
    M = _mass_mixed(R, crba(parent, pT, axis, I6, Eup))
    nu_b, gdot = body_to_mixed(R, nu_m)
    gb = np.empty(3)
    _mtv3(R, gravity, gb)
    h = mixed_vec(R, rnea(parent, pT, axis, I6, Eup, nu_b, gdot, gb))
    Jc = foot_jacobians_mixed(parent, axis, Rw, pw, foot_link, foot_off, nv)
    fp, fv, fa = feet_state(parent, pT, axis, Eup, Rw, pw, foot_link, foot_off,
                            nu_b, gdot)
    return M, h, Jc, fp, fv, fa


@njit(cache=CACHE)
def full_snapshot(parent, RT, pT, axis, I6, mass, com, foot_link, foot_off,
                  base_pos, quat, qj, nu_m, gravity):
    """``dynamics_terms`` plus CoM position and velocity."""
    Rw, pw, Eup = link_transforms(parent, RT, pT, axis, base_pos, quat, qj)
    R = Rw[0]
    nv = nu_m.shape[0]
    M = _mass_mixed(R, crba(parent, pT, axis, I6, Eup))
    nu_b, gdot = body_to_mixed(R, nu_m)
    gb = np.empty(3)
    _mtv3(R, gravity, gb)
    h = mixed_vec(R, rnea(parent, pT, axis, I6, Eup, nu_b, gdot, gb))
    Jc = foot_jacobians_mixed(parent, axis, Rw, pw, foot_link, foot_off, nv)
    fp, fv, fa = feet_state(parent, pT, axis, Eup, Rw, pw, foot_link, foot_off,
                            nu_b, gdot)
    c, cd = com_state(parent, pT, axis, Eup, Rw, pw, mass, com, nu_b)
    return M, h, Jc, fp, fv, fa, c, cd


@njit(cache=CACHE)
def bias_only(parent, RT, pT, axis, I6, base_pos, quat, qj, nu_m, gravity):
    return inverse_dynamics_mixed(parent, RT, pT, axis, I6, base_pos, quat, qj,
                                  nu_m, np.zeros(nu_m.shape[0]), gravity)


@njit(cache=CACHE)
def pinv_trunc(A, rel_tol):
    m, n = A.shape
    out = np.zeros((n, m))
    if m == 0 or n == 0:
        return out
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.shape[0] == 0 or s[0] == 0.0:
        return out
    cut = rel_tol * s[0]
    for i in range(s.shape[0]):
        if s[i] > cut:
            inv = 1.0 / s[i]
            for a in range(n):
                va = Vt[i, a] * inv
                for b in range(m):
                    out[a, b] += va * U[b, i]
    return out


@njit(cache=CACHE)
def projector(Jc, rel_tol):
    """Orthogonal projector onto the null space of ``Jc`` (``I - Jc^+ Jc``)."""
    n = Jc.shape[1]
    P = np.eye(n)
    if Jc.shape[0] == 0:
        return P
    U, s, Vt = np.linalg.svd(Jc, full_matrices=False)
    if s[0] == 0.0:
        return P
    cut = rel_tol * s[0]
    for i in range(s.shape[0]):
        if s[i] > cut:
            for a in range(n):
                for b in range(n):
                    P[a, b] -= Vt[i, a] * Vt[i, b]
    return P


@njit(cache=CACHE)
def select_rows(Jall, feet):
    k = feet.shape[0]
    out = np.zeros((3 * k, Jall.shape[1]))
    for i in range(k):
        f = feet[i]
        out[3 * i:3 * i + 3] = Jall[3 * f:3 * f + 3]
    return out


@njit(cache=CACHE)
def constrained_inertia(P, M):
    n = M.shape[0]
    Mc = P @ M
    for i in range(n):
        for j in range(n):
            Mc[i, j] -= P[i, j]
        Mc[i, i] += 1.0
    return Mc


@njit(cache=CACHE)
def projected_accel(parent, RT, pT, axis, I6, foot_link, foot_off, feet,
                    base_pos, quat, qj, nu_m, tau, Pdot, gravity, rel_tol):
    """Constraint-consistent forward dynamics ``Mc^-1(-P h + Pdot qd + P S tau)``."""
    M, h, Jall, fp, fv, fa = dynamics_terms(parent, RT, pT, axis, I6, foot_link,
                                            foot_off, base_pos, quat, qj, nu_m,
                                            gravity)
    P = projector(select_rows(Jall, feet), rel_tol)
    Mc = constrained_inertia(P, M)
    St = tau.copy()
    St[:6] = 0.0
    rhs = P @ (St - h) + Pdot @ nu_m
    return np.linalg.solve(Mc, rhs)


@njit(cache=CACHE)
def euler_to_quat(rpy):
    """Intrinsic Z-Y-X (yaw, pitch, roll) angles to a unit quaternion."""
    cr = np.cos(0.5 * rpy[0])
    sr = np.sin(0.5 * rpy[0])
    cp = np.cos(0.5 * rpy[1])
    sp = np.sin(0.5 * rpy[1])
    cy = np.cos(0.5 * rpy[2])
    sy = np.sin(0.5 * rpy[2])
    q = np.empty(4)
    q[0] = cr * cp * cy + sr * sp * sy
    q[1] = sr * cp * cy - cr * sp * sy
    q[2] = cr * sp * cy + sr * cp * sy
    q[3] = cr * cp * sy - sr * sp * cy
    return q


@njit(cache=CACHE)
def quat_to_euler(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    out = np.empty(3)
    out[0] = np.arctan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    s = 2.0 * (w * y - z * x)
    if s > 1.0:
        s = 1.0
    elif s < -1.0:
        s = -1.0
    out[1] = np.arcsin(s)
    out[2] = np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return out


@njit(cache=CACHE)
def linearize_core(parent, RT, pT, axis, I6, foot_link, foot_off, feet,
                   base_pos, quat, qj, nu_m, tau, Pdot, gravity, rel_tol, eps):
    """Central differences of the base acceleration over the 12 base states.

    Columns 3..5 perturb the Z-Y-X Euler angles, columns 6..11 the mixed base
    velocity ``[v_I; w_B]``.  Position columns are zero because nothing in the
    model depends on where the base is.  A velocity perturbation leaves M, Jc
    and P untouched, so those columns reuse one ``Mc`` and only re-run the
    bias pass.
    """
    A = np.zeros((6, 12))
    rpy0 = quat_to_euler(quat)
    # the dynamics are invariant under base translation: columns 0..2 vanish
    for c in range(3, 6):
        for sgn in range(2):
            d = eps if sgn == 0 else -eps
            pos = base_pos.copy()
            qt = quat
            if c < 3:
                pos[c] += d
            else:
                rpy = rpy0.copy()
                rpy[c - 3] += d
                qt = euler_to_quat(rpy)
            qdd = projected_accel(parent, RT, pT, axis, I6, foot_link, foot_off,
                                  feet, pos, qt, qj, nu_m, tau, Pdot, gravity,
                                  rel_tol)
            for r in range(6):
                A[r, c] += qdd[r] / (2.0 * d)
    M, h, Jall, fp, fv, fa = dynamics_terms(parent, RT, pT, axis, I6, foot_link,
                                            foot_off, base_pos, quat, qj, nu_m,
                                            gravity)
    P = projector(select_rows(Jall, feet), rel_tol)
    Mc = constrained_inertia(P, M)
    n = M.shape[0]
    rhs = np.zeros((n, 12))
    for c in range(6):
        for sgn in range(2):
            d = eps if sgn == 0 else -eps
            nu = nu_m.copy()
            nu[c] += d
            hb = bias_only(parent, RT, pT, axis, I6, base_pos, quat, qj, nu, gravity)
            col = Pdot @ nu - P @ hb
            for r in range(n):
                rhs[r, 2 * c + sgn] = col[r]
    sol = np.linalg.solve(Mc, rhs)
    for c in range(6):
        for r in range(6):
            A[r, 6 + c] = (sol[r, 2 * c] - sol[r, 2 * c + 1]) / (2.0 * eps)
    return A
