"""Compiled inner loops for the planar pseudo-rigid chain.

Conventions: vertex ``j`` is the distal end of link ``j`` and carries the
point mass ``m[j]``; joint ``a`` sits at ``pts[a]`` (``pts[0]`` is the base).
All arrays are float64 and indices run base (0) to tip (n-1).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def chain_points(q, lengths):
    n = q.shape[0]
    pts = np.zeros((n + 1, 2))
    phi = 0.0
    for j in range(n):
        phi += q[j]
        pts[j + 1, 0] = pts[j, 0] + lengths[j] * np.cos(phi)
        pts[j + 1, 1] = pts[j, 1] + lengths[j] * np.sin(phi)
    return pts


@njit(cache=True)
def vertex_velocities(q, qd, lengths):
    n = q.shape[0]
    vel = np.zeros((n, 2))
    phi = 0.0
    w = 0.0
    vx = 0.0
    vy = 0.0
    for j in range(n):
        phi += q[j]
        w += qd[j]
        vx += -lengths[j] * w * np.sin(phi)
        vy += lengths[j] * w * np.cos(phi)
        vel[j, 0] = vx
        vel[j, 1] = vy
    return vel


@njit(cache=True)
def segment_contact(pts, vel, j, cx, cy, radius):
    """Closest point of link j (pts[j] to pts[j+1]) to a circle centre.

    Returns (penetrating, px, py, nx, ny, depth, normal speed) with the
    normal pointing from the centre to the point.
    """
    ax, ay = pts[j, 0], pts[j, 1]
    ex, ey = pts[j + 1, 0] - ax, pts[j + 1, 1] - ay
    ll = ex * ex + ey * ey
    s = ((cx - ax) * ex + (cy - ay) * ey) / ll if ll > 0.0 else 0.0
    s = min(max(s, 0.0), 1.0)
    px, py = ax + s * ex, ay + s * ey
    dx, dy = px - cx, py - cy
    dist = np.sqrt(dx * dx + dy * dy)
    pen = radius - dist
    if pen <= 0.0 or dist == 0.0:
        return False, px, py, 0.0, 0.0, 0.0, 0.0
    nx, ny = dx / dist, dy / dist
    # rigid link: the point velocity interpolates its end vertices
    v0x = vel[j - 1, 0] if j > 0 else 0.0
    v0y = vel[j - 1, 1] if j > 0 else 0.0
    vx = (1.0 - s) * v0x + s * vel[j, 0]
    vy = (1.0 - s) * v0y + s * vel[j, 1]
    return True, px, py, nx, ny, pen, vx * nx + vy * ny


@njit(cache=True)
def mass_matrix(pts, masses):
    n = masses.shape[0]
    # suffix sums over vertices j >= b
    sm = np.zeros(n + 1)
    spx = np.zeros(n + 1)
    spy = np.zeros(n + 1)
    spp = np.zeros(n + 1)
    for j in range(n - 1, -1, -1):
        px = pts[j + 1, 0]
        py = pts[j + 1, 1]
        sm[j] = sm[j + 1] + masses[j]
        spx[j] = spx[j + 1] + masses[j] * px
        spy[j] = spy[j + 1] + masses[j] * py
        spp[j] = spp[j + 1] + masses[j] * (px * px + py * py)
    M = np.empty((n, n))
    for a in range(n):
        oax = pts[a, 0]
        oay = pts[a, 1]
        for b in range(a, n):
            obx = pts[b, 0]
            oby = pts[b, 1]
            val = (spp[b] - (oax + obx) * spx[b] - (oay + oby) * spy[b]
                   + (oax * obx + oay * oby) * sm[b])
            M[a, b] = val
            M[b, a] = val
    return M


@njit(cache=True)
def bias_torques(q, qd, pts, lengths, masses, gx, gy):
    """Coriolis/centrifugal vector and gravity torques (both on the left-hand side)."""
    n = q.shape[0]
    acc = np.zeros((n, 2))
    phi = 0.0
    w = 0.0
    ax = 0.0
    ay = 0.0
    for j in range(n):
        phi += q[j]
        w += qd[j]
        ax -= lengths[j] * w * w * np.cos(phi)
        ay -= lengths[j] * w * w * np.sin(phi)
        acc[j, 0] = ax
        acc[j, 1] = ay
    c = np.zeros(n)
    g = np.zeros(n)
    s_cross = 0.0   # sum m p x acc
    s_ax = 0.0      # sum m acc
    s_ay = 0.0
    s_m = 0.0
    s_px = 0.0
    s_py = 0.0
    for a in range(n - 1, -1, -1):
        m = masses[a]
        px = pts[a + 1, 0]
        py = pts[a + 1, 1]
        s_cross += m * (px * acc[a, 1] - py * acc[a, 0])
        s_ax += m * acc[a, 0]
        s_ay += m * acc[a, 1]
        s_m += m
        s_px += m * px
        s_py += m * py
        ox = pts[a, 0]
        oy = pts[a, 1]
        c[a] = s_cross - (ox * s_ay - oy * s_ax)
        rx = s_px - ox * s_m
        ry = s_py - oy * s_m
        g[a] = -(rx * gy - ry * gx)
    return c, g


@njit(cache=True)
def point_force_torque(pts, j, fx, fy, out):
    """Accumulate J_c^T f for a force applied at vertex j."""
    px = pts[j + 1, 0]
    py = pts[j + 1, 1]
    for a in range(j + 1):
        out[a] += (px - pts[a, 0]) * fy - (py - pts[a, 1]) * fx


@njit(cache=True)
def point_force_at(pts, j, px, py, fx, fy, out):
    """Accumulate J_c^T f for a force applied at point (px, py) on link j."""
    for a in range(j + 1):
        out[a] += (px - pts[a, 0]) * fy - (py - pts[a, 1]) * fx


@njit(cache=True)
def cholesky_solve(A, b):
    n = b.shape[0]
    Lc = np.zeros((n, n))
    for i in range(n):
        for k in range(i + 1):
            s = A[i, k]
            for p in range(k):
                s -= Lc[i, p] * Lc[k, p]
            if i == k:
                if s <= 0.0:
                    raise np.linalg.LinAlgError("matrix is not positive definite")
                Lc[i, i] = np.sqrt(s)
            else:
                Lc[i, k] = s / Lc[k, k]
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for p in range(i):
            s -= Lc[i, p] * y[p]
        y[i] = s / Lc[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for p in range(i + 1, n):
            s -= Lc[p, i] * x[p]
        x[i] = s / Lc[i, i]
    return x


@njit(cache=True)
def substep(q, qd, h, lengths, masses, stiff, damp, arms,
            theta_lim, k_lim, gx, gy,
            F, rotor_mass, rotor_damp,
            pt_link, pt_force,
            cyl_on, cx, cy, radius, k_pen, c_pen):
    """One linearly implicit Euler step of the chain.

    Joint springs, joint damping, limit penalties, cylinder penalties and the
    reflected rotor inertia/damping of both winches are taken implicitly; the
    Coriolis, gravity and applied tendon/point forces explicitly.
    Returns (q1, qd1, penetrating) where ``penetrating`` flags cylinder contact.
    """
    n = q.shape[0]
    pts = chain_points(q, lengths)
    M = mass_matrix(pts, masses)
    c, g = bias_torques(q, qd, pts, lengths, masses, gx, gy)

    A = M.copy()
    rhs = np.zeros(n)
    tau = np.zeros(n)

    # tendons: rows +arms and -arms of the Jacobian
    ftot = F[0] - F[1]
    mr = rotor_mass[0] + rotor_mass[1]
    br = rotor_damp[0] + rotor_damp[1]
    for a in range(n):
        tau[a] += arms[a] * ftot
        for b in range(n):
            A[a, b] += (mr + h * br) * arms[a] * arms[b]

    # joint springs, dampers and symmetric curl limits
    for a in range(n):
        kt = stiff[a]
        ts = -stiff[a] * q[a]
        if q[a] > theta_lim:
            kt += k_lim
            ts -= k_lim * (q[a] - theta_lim)
        elif q[a] < -theta_lim:
            kt += k_lim
            ts -= k_lim * (q[a] + theta_lim)
        tau[a] += ts
        A[a, a] += h * damp[a] + h * h * kt

    if pt_link >= 0 and pt_force != 0.0:
        phi = 0.0
        for a in range(pt_link + 1):
            phi += q[a]
        point_force_torque(pts, pt_link, -np.sin(phi) * pt_force,
                           np.cos(phi) * pt_force, tau)

    hit = False
    if cyl_on:
        vel = vertex_velocities(q, qd, lengths)
        jn = np.zeros(n)
        for j in range(n):
            hit_j, px, py, nx, ny, pen, vn = segment_contact(pts, vel, j, cx, cy, radius)
            if not hit_j:
                continue
            cj = c_pen * np.sqrt(masses[j])
            if k_pen * pen - cj * vn <= 0.0:
                continue
            hit = True
            # normal row of the contact-point Jacobian (joints 0..j move it)
            for a in range(j + 1):
                jn[a] = (px - pts[a, 0]) * ny - (py - pts[a, 1]) * nx
            fel = k_pen * pen
            for a in range(j + 1):
                tau[a] += jn[a] * fel
                for b in range(j + 1):
                    A[a, b] += (h * cj + h * h * k_pen) * jn[a] * jn[b]

    for a in range(n):
        rhs[a] = h * (tau[a] - c[a] - g[a])
        s = 0.0
        for b in range(n):
            s += (M[a, b] + mr * arms[a] * arms[b]) * qd[b]
        rhs[a] += s
    qd1 = cholesky_solve(A, rhs)
    q1 = q + h * qd1
    return q1, qd1, hit


@njit(cache=True)
def substeps(q, qd, h, lengths, masses, stiff, damp, arms,
             theta_lim, k_lim, gx, gy,
             F, rotor_mass, rotor_damp,
             pt_link, pt_forces,
             cyl_on, cx, cy, radius, k_pen, c_pen):
    """``len(pt_forces)`` consecutive substeps; pt_forces[s] is the point force of substep s."""
    hit_any = False
    for s in range(pt_forces.shape[0]):
        f = pt_forces[s]
        q, qd, hit = substep(q, qd, h, lengths, masses, stiff, damp, arms,
                             theta_lim, k_lim, gx, gy, F, rotor_mass, rotor_damp,
                             pt_link if f != 0.0 else -1, f,
                             cyl_on, cx, cy, radius, k_pen, c_pen)
        hit_any = hit_any or hit
    return q, qd, hit_any
