"""Hot numeric kernels for the trial loop and assist transforms.

Everything here is numba-compiled by default. Set AIMASSIST_NO_NUMBA=1 to
run the identical functions as pure Python/numpy (slow path, same results
bit for bit). benchmarks/bench_kernels.py compares the two.

The incremental Python runner in `harness` calls the small per-tick
functions below; `run_trial_kernel` is the fused whole-trial loop used for
agent batches. Both compose the same functions in the same order, so their
outputs are identical.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "njit",
    "project_point",
    "agent_tick",
    "lerp_eval",
    "gravity_eval",
    "mlp_forward",
    "nn_blend",
    "encode_features",
    "subtask_tick",
    "run_trial_kernel",
]


def _flag_disabled() -> bool:
    return os.environ.get("AIMASSIST_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")


NUMBA_ENABLED = not _flag_disabled()
if NUMBA_ENABLED:
    try:
        import numba as _numba
    except ImportError:
        NUMBA_ENABLED = False

if NUMBA_ENABLED:
    def njit(func):
        return _numba.njit(cache=True)(func)
else:
    def njit(func):
        return func


# subtask scoring state vector layout
ST_INSIDE = 0
ST_CONT_START = 1
ST_TOTAL_ON = 2
ST_FIRST_ENTER = 3
ST_TOUCHED = 4
ST_ON_TICKS = 5
ST_TRIP_TICKS = 6

MODE_LOCATE = 0
MODE_SELECT = 1
MODE_FOLLOW = 2

METHOD_NONE = 0
METHOD_LERP = 1
METHOD_GRAVITY = 2
METHOD_NN = 3

CAUSE_NONE = 0
CAUSE_EXPIRED = 1
CAUSE_NEVER_VISIBLE = 2

# phase random-walk rate of the tremor sinusoid, rad/sqrt(s)
TREMOR_PHASE_DIFFUSION = 2.0
# perceived-target velocity estimation: low-pass weight and the apparent
# speed (px/s) above which a position change is a target switch, not motion
TARGET_VEL_SMOOTH = 0.85
TARGET_JUMP_SPEED = 1500.0

_TAU = 6.283185307179586


@njit
def project_point(cam, px, py, pz):
    """Perspective-project a world point.

    cam is the packed camera vector [pos(3), right(3), up(3), forward(3),
    focal_px, view_w, view_h]. Returns (screen_x, screen_y, depth); the
    screen coordinates are meaningful only when depth > 1e-9.
    """
    dx = px - cam[0]
    dy = py - cam[1]
    dz = pz - cam[2]
    cx = dx * cam[3] + dy * cam[4] + dz * cam[5]
    cy = dx * cam[6] + dy * cam[7] + dz * cam[8]
    cz = dx * cam[9] + dy * cam[10] + dz * cam[11]
    if cz <= 1e-9:
        return 0.0, 0.0, cz
    sx = cam[13] * 0.5 + cam[12] * cx / cz
    sy = cam[14] * 0.5 - cam[12] * cy / cz
    return sx, sy, cz


@njit
def agent_tick(vel_x, vel_y, cur_x, cur_y, perc_x, perc_y,
               prev_perc_x, prev_perc_y, tvel_x, tvel_y, t, dt,
               gain, max_speed, damping, noise_coeff, trem_amp, trem_freq,
               lead_s, phase_x, phase_y, n1, n2, n3, n4):
    """One step of the closed-loop pursuit model.

    The agent estimates the perceived target's velocity (low-passed frame
    difference, reset when the position jumps faster than a plausible
    target), aims lead_s seconds ahead of it, and relaxes its own velocity
    toward gain * (aim - cursor) clamped to max_speed. The emitted movement
    adds signal-dependent Gaussian noise (sigma proportional to speed) and
    a sinusoidal tremor whose phase random-walks.

    Returns (vel_x, vel_y, move_x, move_y, phase_x, phase_y, tvel_x, tvel_y).
    """
    jx = (perc_x - prev_perc_x) / dt
    jy = (perc_y - prev_perc_y) / dt
    if math.sqrt(jx * jx + jy * jy) > TARGET_JUMP_SPEED:
        ntx = 0.0
        nty = 0.0
    else:
        ntx = TARGET_VEL_SMOOTH * tvel_x + (1.0 - TARGET_VEL_SMOOTH) * jx
        nty = TARGET_VEL_SMOOTH * tvel_y + (1.0 - TARGET_VEL_SMOOTH) * jy
    aim_x = perc_x + ntx * lead_s
    aim_y = perc_y + nty * lead_s
    dvx = gain * (aim_x - cur_x)
    dvy = gain * (aim_y - cur_y)
    ds = math.sqrt(dvx * dvx + dvy * dvy)
    if ds > max_speed:
        sc = max_speed / ds
        dvx *= sc
        dvy *= sc
    nvx = damping * vel_x + (1.0 - damping) * dvx
    nvy = damping * vel_y + (1.0 - damping) * dvy
    speed = math.sqrt(nvx * nvx + nvy * nvy)
    sigma = noise_coeff * speed
    tvx = trem_amp * math.sin(_TAU * trem_freq * t + phase_x)
    tvy = trem_amp * math.sin(_TAU * trem_freq * t + phase_y)
    jit = TREMOR_PHASE_DIFFUSION * math.sqrt(dt)
    mx = (nvx + sigma * n1 + tvx) * dt
    my = (nvy + sigma * n2 + tvy) * dt
    return nvx, nvy, mx, my, phase_x + jit * n3, phase_y + jit * n4, ntx, nty


@njit
def lerp_eval(cx, cy, vx, vy, tx, ty, radius, alpha_max, gamma, gate):
    """Single-target linear-interpolation deviation of a movement vector."""
    speed = math.sqrt(vx * vx + vy * vy)
    if speed == 0.0:
        return vx, vy
    ex = tx - cx
    ey = ty - cy
    d = math.sqrt(ex * ex + ey * ey)
    if d == 0.0 or d > radius:
        return vx, vy
    ux = ex / d
    uy = ey / d
    align = 1.0
    if gate != 0:
        ct = (vx * ux + vy * uy) / speed
        align = ct if ct > 0.0 else 0.0
    prox = 1.0 - d / radius
    alpha = alpha_max * prox ** gamma * align
    return (1.0 - alpha) * vx + alpha * speed * ux, (1.0 - alpha) * vy + alpha * speed * uy


@njit
def gravity_eval(cx, cy, vx, vy, att, wts, radius, gamma, zones, kappa):
    """Multi-attractor gravity deviation of a movement vector.

    att is (n, 2) attractor screen positions with weights wts (n,). Inside
    any exclusion zone (x0, y0, x1, y1 rows) the input passes through
    untouched. The total deviation is capped at kappa * |v|.
    """
    for z in range(zones.shape[0]):
        if zones[z, 0] <= cx <= zones[z, 2] and zones[z, 1] <= cy <= zones[z, 3]:
            return vx, vy
    speed = math.sqrt(vx * vx + vy * vy)
    if speed == 0.0:
        return 0.0, 0.0
    sx = 0.0
    sy = 0.0
    for i in range(att.shape[0]):
        ex = att[i, 0] - cx
        ey = att[i, 1] - cy
        d = math.sqrt(ex * ex + ey * ey)
        if d >= radius or d <= 1e-12:
            continue
        w = wts[i] * (1.0 - d / radius) ** gamma
        sx += w * ex / d
        sy += w * ey / d
    dev_x = speed * sx
    dev_y = speed * sy
    dev = math.sqrt(dev_x * dev_x + dev_y * dev_y)
    cap = kappa * speed
    if dev > cap:
        sc = cap / dev
        dev_x *= sc
        dev_y *= sc
    return vx + dev_x, vy + dev_y


@njit
def mlp_forward(w1, b1, w2, b2, w3, b3, x):
    """Dense 3-layer forward pass: tanh, tanh, linear head.

    The head's first two outputs are normalized into a unit direction
    ((1, 0) when the raw pair is exactly zero); the third squashes to a
    confidence in (0, 1) through a sigmoid.
    """
    h1 = np.empty(b1.shape[0])
    for i in range(w1.shape[0]):
        s = b1[i]
        for j in range(w1.shape[1]):
            s += w1[i, j] * x[j]
        h1[i] = math.tanh(s)
    h2 = np.empty(b2.shape[0])
    for i in range(w2.shape[0]):
        s = b2[i]
        for j in range(w2.shape[1]):
            s += w2[i, j] * h1[j]
        h2[i] = math.tanh(s)
    o0 = b3[0]
    o1 = b3[1]
    o2 = b3[2]
    for j in range(w3.shape[1]):
        o0 += w3[0, j] * h2[j]
        o1 += w3[1, j] * h2[j]
        o2 += w3[2, j] * h2[j]
    n = math.sqrt(o0 * o0 + o1 * o1)
    if n > 0.0:
        dx = o0 / n
        dy = o1 / n
    else:
        dx = 1.0
        dy = 0.0
    conf = 1.0 / (1.0 + math.exp(-o2))
    return dx, dy, conf


@njit
def nn_blend(vx, vy, dx, dy, conf, beta):
    """Blend a movement vector toward a predicted unit direction."""
    speed = math.sqrt(vx * vx + vy * vy)
    if speed == 0.0:
        return 0.0, 0.0
    g = beta * conf
    return (1.0 - g) * vx + g * speed * dx, (1.0 - g) * vy + g * speed * dy


@njit
def encode_features(f, hist, hist_len, tick_idx, step, n_hist, grid_g,
                    vw, vh, tgt_xy, tgt_valid):
    """Fill the predictor feature vector in place.

    First 2 * n_hist entries: cursor history sampled every `step` ticks,
    oldest first, relative to the current position and normalized by the
    viewport diagonal (the newest entry is therefore (0, 0); missing
    history back-pads with the oldest stored sample). Remaining
    grid_g * grid_g entries: occupancy grid over the prospective-target
    screen positions tgt_xy (m, 2) masked by tgt_valid (m,), cell =
    floor(G*x/w), floor(G*y/h), row-major; off-grid targets set no cell.
    """
    cap = hist.shape[0]
    now_x = hist[tick_idx % cap, 0]
    now_y = hist[tick_idx % cap, 1]
    diag = math.sqrt(vw * vw + vh * vh)
    oldest = tick_idx - (hist_len - 1)
    for k in range(n_hist):
        idx = tick_idx - (n_hist - 1 - k) * step
        if idx < oldest:
            idx = oldest
        slot = idx % cap
        f[2 * k] = (hist[slot, 0] - now_x) / diag
        f[2 * k + 1] = (hist[slot, 1] - now_y) / diag
    base = 2 * n_hist
    for i in range(grid_g * grid_g):
        f[base + i] = 0.0
    for ti in range(tgt_xy.shape[0]):
        if tgt_valid[ti] != 0:
            gx = int(math.floor(grid_g * tgt_xy[ti, 0] / vw))
            gy = int(math.floor(grid_g * tgt_xy[ti, 1] / vh))
            if 0 <= gx < grid_g and 0 <= gy < grid_g:
                f[base + gy * grid_g + gx] = 1.0


@njit
def subtask_tick(st, r0x, r0y, v0, r1x, r1y, v1, radius, t0, dt, mode, dwell):
    """Advance the per-subtask scoring state machine by one tick.

    (r0, r1) are the cursor positions relative to the target at the tick's
    start/end boundaries, valid only where v0/v1 are true. Disc crossings
    are interpolated inside the tick, so completion times are sub-tick.
    Mutates the state vector; returns (completed, completion_time) with the
    time local to the subtask. Follow mode never completes early; it counts
    on-target boundary ticks instead.
    """
    t1 = t0 + dt
    st[ST_TRIP_TICKS] += 1.0
    inside = st[ST_INSIDE] > 0.5
    completed = False
    comp_t = -1.0

    if v0 and v1:
        dx = r1x - r0x
        dy = r1y - r0y
        a = dx * dx + dy * dy
        c = r0x * r0x + r0y * r0y - radius * radius
        s_lo = -1.0
        s_hi = -1.0
        if a > 0.0:
            b = 2.0 * (r0x * dx + r0y * dy)
            disc = b * b - 4.0 * a * c
            if disc > 0.0:
                sq = math.sqrt(disc)
                s_lo = (-b - sq) / (2.0 * a)
                s_hi = (-b + sq) / (2.0 * a)
        if inside:
            # |r(s)| is convex along the segment: at most one exit crossing
            has_exit = 0.0 < s_hi <= 1.0
            exit_t = t0 + s_hi * dt if has_exit else t1
            if mode == MODE_SELECT:
                deadline = st[ST_CONT_START] + dwell
                if deadline <= exit_t:
                    completed = True
                    comp_t = deadline
            if not completed and has_exit:
                st[ST_TOTAL_ON] += exit_t - st[ST_CONT_START]
                inside = False
        else:
            if 0.0 <= s_lo <= 1.0:
                enter_t = t0 + s_lo * dt
                st[ST_TOUCHED] = 1.0
                if st[ST_FIRST_ENTER] < 0.0:
                    st[ST_FIRST_ENTER] = enter_t
                if mode == MODE_LOCATE:
                    completed = True
                    comp_t = enter_t
                else:
                    has_exit = s_hi <= 1.0
                    exit_t = t0 + s_hi * dt if has_exit else t1
                    if mode == MODE_SELECT and enter_t + dwell <= exit_t:
                        completed = True
                        comp_t = enter_t + dwell
                    elif has_exit:
                        # passed through the disc within one tick
                        st[ST_TOTAL_ON] += exit_t - enter_t
                    else:
                        inside = True
                        st[ST_CONT_START] = enter_t
    elif inside and v0 and not v1:
        # target became unprojectable mid-dwell: close the open interval
        st[ST_TOTAL_ON] += t0 - st[ST_CONT_START]
        inside = False
    elif (not v0) and v1:
        # target (re)appeared: evaluate the end boundary as a point event
        if r1x * r1x + r1y * r1y <= radius * radius:
            st[ST_TOUCHED] = 1.0
            if st[ST_FIRST_ENTER] < 0.0:
                st[ST_FIRST_ENTER] = t1
            if mode == MODE_LOCATE:
                completed = True
                comp_t = t1
            else:
                inside = True
                st[ST_CONT_START] = t1
    elif not v1:
        inside = False

    if v1 and r1x * r1x + r1y * r1y <= radius * radius:
        st[ST_ON_TICKS] += 1.0
        st[ST_TOUCHED] = 1.0
        if st[ST_FIRST_ENTER] < 0.0:
            st[ST_FIRST_ENTER] = t1
    st[ST_INSIDE] = 1.0 if inside else 0.0
    return completed, comp_t


@njit
def run_trial_kernel(cam, t_pos0, t_vel, t_fly, t_radius, t_window,
                     mode, dt, dwell,
                     latency_ticks, max_speed, gain, damping,
                     noise_coeff, trem_amp, trem_freq, lead_s,
                     phases, noise,
                     method,
                     lerp_radius, lerp_alpha_max, lerp_gamma, lerp_gate,
                     grav_radius, grav_gamma, grav_kappa, grav_weight, zones,
                     w1, b1, w2, b2, w3, b3, beta, n_hist, hist_step, grid_g):
    """Whole-trial fused loop for agent-driven runs.

    Targets activate strictly sequentially; each runs until completion or
    the end of its availability window (for moving targets, the trip end).
    Composes the per-tick kernels exactly as the incremental Python runner
    does, so both paths produce identical records.

    Returns per-target arrays: (success, cause, appear_x, appear_y,
    appear_center_dist, appear_cursor_dist, cam_dist, acquire_time,
    overshoot_time, extra_time, follow_frac, on_ticks, trip_ticks,
    t_activate, t_complete).
    """
    n = t_pos0.shape[0]
    vw = cam[13]
    vh = cam[14]
    success = np.zeros(n, np.uint8)
    cause = np.zeros(n, np.int64)
    appear_x = np.full(n, np.nan)
    appear_y = np.full(n, np.nan)
    appear_center = np.full(n, np.nan)
    appear_cursor = np.full(n, np.nan)
    cam_dist = np.zeros(n)
    acq = np.full(n, np.nan)
    overshoot = np.full(n, np.nan)
    extra = np.full(n, np.nan)
    follow_frac = np.full(n, np.nan)
    on_ticks = np.zeros(n)
    trip_ticks = np.zeros(n)
    t_act = np.zeros(n)
    t_comp = np.full(n, np.nan)

    cur_x = vw * 0.5
    cur_y = vh * 0.5
    vel_x = 0.0
    vel_y = 0.0
    phase_x = phases[0]
    phase_y = phases[1]
    lat = latency_ticks if latency_ticks > 0 else 1
    ring = np.empty((lat, 2))
    for i in range(lat):
        ring[i, 0] = cur_x
        ring[i, 1] = cur_y
    hcap = (n_hist - 1) * hist_step + 1
    hist = np.empty((hcap, 2))
    feat = np.empty(2 * n_hist + grid_g * grid_g)
    st = np.zeros(7)
    att = np.empty((1, 2))
    wts = np.empty(1)
    wts[0] = grav_weight
    enc_xy = np.empty((1, 2))
    enc_valid = np.zeros(1, np.uint8)

    tick_global = 0
    last_perc_x = cur_x
    last_perc_y = cur_y
    prev_perc_x = cur_x
    prev_perc_y = cur_y
    tvel_x = 0.0
    tvel_y = 0.0

    for k in range(n):
        t_act[k] = tick_global * dt
        ddx = t_pos0[k, 0] - cam[0]
        ddy = t_pos0[k, 1] - cam[1]
        ddz = t_pos0[k, 2] - cam[2]
        cam_dist[k] = math.sqrt(ddx * ddx + ddy * ddy + ddz * ddz)
        dur = t_window[k]
        if 0.0 < t_fly[k] < dur:
            dur = t_fly[k]
        n_ticks = int(dur / dt - 1e-9) + 1

        sx, sy, sz = project_point(cam, t_pos0[k, 0], t_pos0[k, 1], t_pos0[k, 2])
        tgt_valid = sz > 1e-9
        any_vis = tgt_valid and 0.0 <= sx <= vw and 0.0 <= sy <= vh
        if tgt_valid:
            appear_x[k] = sx
            appear_y[k] = sy
            dcx = sx - vw * 0.5
            dcy = sy - vh * 0.5
            appear_center[k] = math.sqrt(dcx * dcx + dcy * dcy)
            dux = sx - cur_x
            duy = sy - cur_y
            appear_cursor[k] = math.sqrt(dux * dux + duy * duy)
        for i in range(7):
            st[i] = 0.0
        st[ST_FIRST_ENTER] = -1.0
        completed = False
        comp_t = -1.0
        r0x = 0.0
        r0y = 0.0
        if tgt_valid:
            r0x = cur_x - sx
            r0y = cur_y - sy
            if r0x * r0x + r0y * r0y <= t_radius[k] * t_radius[k]:
                st[ST_INSIDE] = 1.0
                st[ST_FIRST_ENTER] = 0.0
                st[ST_TOUCHED] = 1.0
                if mode == MODE_LOCATE:
                    completed = True
                    comp_t = 0.0
        tgt_x = sx
        tgt_y = sy

        j = 0
        while j < n_ticks and not completed:
            t0 = j * dt
            if tgt_valid:
                last_perc_x = tgt_x
                last_perc_y = tgt_y
            if latency_ticks <= 0:
                perc_x = last_perc_x
                perc_y = last_perc_y
            else:
                slot = tick_global % lat
                perc_x = ring[slot, 0]
                perc_y = ring[slot, 1]
                ring[slot, 0] = last_perc_x
                ring[slot, 1] = last_perc_y
            hslot = tick_global % hcap
            hist[hslot, 0] = cur_x
            hist[hslot, 1] = cur_y

            t_g = tick_global * dt
            (vel_x, vel_y, mvx, mvy, phase_x, phase_y,
             tvel_x, tvel_y) = agent_tick(
                vel_x, vel_y, cur_x, cur_y, perc_x, perc_y,
                prev_perc_x, prev_perc_y, tvel_x, tvel_y, t_g, dt,
                gain, max_speed, damping, noise_coeff, trem_amp, trem_freq,
                lead_s, phase_x, phase_y,
                noise[tick_global, 0], noise[tick_global, 1],
                noise[tick_global, 2], noise[tick_global, 3])
            prev_perc_x = perc_x
            prev_perc_y = perc_y

            ax = mvx
            ay = mvy
            if method == METHOD_LERP:
                if tgt_valid:
                    ax, ay = lerp_eval(cur_x, cur_y, mvx, mvy, tgt_x, tgt_y,
                                       lerp_radius, lerp_alpha_max, lerp_gamma,
                                       lerp_gate)
            elif method == METHOD_GRAVITY:
                if tgt_valid:
                    att[0, 0] = tgt_x
                    att[0, 1] = tgt_y
                    ax, ay = gravity_eval(cur_x, cur_y, mvx, mvy, att, wts,
                                          grav_radius, grav_gamma, zones,
                                          grav_kappa)
            elif method == METHOD_NN:
                hl = tick_global + 1
                if hl > hcap:
                    hl = hcap
                enc_xy[0, 0] = tgt_x
                enc_xy[0, 1] = tgt_y
                enc_valid[0] = 1 if tgt_valid else 0
                encode_features(feat, hist, hl, tick_global, hist_step, n_hist,
                                grid_g, vw, vh, enc_xy, enc_valid)
                pdx, pdy, conf = mlp_forward(w1, b1, w2, b2, w3, b3, feat)
                ax, ay = nn_blend(mvx, mvy, pdx, pdy, conf, beta)

            cur_x += ax
            cur_y += ay
            if cur_x < 0.0:
                cur_x = 0.0
            elif cur_x > vw:
                cur_x = vw
            if cur_y < 0.0:
                cur_y = 0.0
            elif cur_y > vh:
                cur_y = vh

            tl1 = (j + 1) * dt
            px = t_pos0[k, 0]
            py = t_pos0[k, 1]
            pz = t_pos0[k, 2]
            if t_fly[k] > 0.0:
                tt = tl1 if tl1 < t_fly[k] else t_fly[k]
                px += t_vel[k, 0] * tt
                py += t_vel[k, 1] * tt
                pz += t_vel[k, 2] * tt
            sx1, sy1, sz1 = project_point(cam, px, py, pz)
            v1 = sz1 > 1e-9
            if v1 and 0.0 <= sx1 <= vw and 0.0 <= sy1 <= vh:
                any_vis = True
            r1x = cur_x - sx1
            r1y = cur_y - sy1
            done, ct = subtask_tick(st, r0x, r0y, tgt_valid, r1x, r1y, v1,
                                    t_radius[k], t0, dt, mode, dwell)
            if done:
                completed = True
                comp_t = ct
            r0x = r1x
            r0y = r1y
            tgt_x = sx1
            tgt_y = sy1
            tgt_valid = v1
            tick_global += 1
            j += 1

        trip_ticks[k] = st[ST_TRIP_TICKS]
        on_ticks[k] = st[ST_ON_TICKS]
        if mode == MODE_FOLLOW:
            if st[ST_TOUCHED] > 0.5:
                success[k] = 1
                t_comp[k] = t_act[k] + st[ST_TRIP_TICKS] * dt
            if st[ST_TRIP_TICKS] > 0.0:
                follow_frac[k] = st[ST_ON_TICKS] / st[ST_TRIP_TICKS]
            else:
                follow_frac[k] = 1.0 if st[ST_TOUCHED] > 0.5 else 0.0
        elif completed:
            success[k] = 1
            t_comp[k] = t_act[k] + comp_t
            if mode == MODE_LOCATE:
                acq[k] = comp_t
            else:
                overshoot[k] = st[ST_TOTAL_ON]
                extra[k] = comp_t - (st[ST_FIRST_ENTER] + dwell)
        if success[k] == 0:
            cause[k] = CAUSE_EXPIRED if any_vis else CAUSE_NEVER_VISIBLE

    return (success, cause, appear_x, appear_y, appear_center, appear_cursor,
            cam_dist, acq, overshoot, extra, follow_frac, on_ticks, trip_ticks,
            t_act, t_comp)
