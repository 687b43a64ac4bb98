use std::f64::consts::TAU;

use crate::dsl::{SkillNode, SkillType};

use super::{
    Fault, RealizedWorld, SkillStep, TcpState, CONTACT_TOLERANCE, DT, GRIPPER_TIME, JAM_TRAVEL,
    SETTLE_TIME,
};

/// Result of one skill before it is wrapped into a [`SkillStep`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkillOutcome {
    pub s_out: TcpState,
    pub duration: f64,
    pub success: bool,
    pub max_force: f64,
    pub fault: Option<Fault>,
}

impl SkillOutcome {
    fn ok(s_out: TcpState, duration: f64, max_force: f64) -> Self {
        Self { s_out, duration, success: true, max_force, fault: None }
    }

    fn fail(s_out: TcpState, duration: f64, max_force: f64, fault: Fault) -> Self {
        Self { s_out, duration, success: false, max_force, fault: Some(fault) }
    }
}

/// Executes one validated skill node from `s_in`.
///
/// The returned step has `episode`, `skill_index` and `seed` set to zero;
/// [`super::execute_program`] fills them in.
pub fn execute_skill(node: &SkillNode, s_in: TcpState, world: &RealizedWorld) -> SkillStep {
    let params = node.values();
    let o = execute_skill_with_values(node.skill_type(), &params, s_in, world);
    SkillStep {
        episode: 0,
        skill_index: 0,
        skill_label: node.label().to_string(),
        skill_type: node.skill_type(),
        s_in,
        params,
        s_out: o.s_out,
        duration: o.duration,
        success: o.success,
        max_force: o.max_force,
        seed: 0,
        fault: o.fault,
    }
}

/// Executes a skill from raw parameter values in signature order.
pub fn execute_skill_with_values(
    skill_type: SkillType,
    p: &[f64],
    s_in: TcpState,
    world: &RealizedWorld,
) -> SkillOutcome {
    assert_eq!(p.len(), skill_type.signature().len(), "parameter count for {skill_type}");
    match skill_type {
        SkillType::MoveLinear => move_linear(s_in, [p[0], p[1], p[2]], p[3], p[4], world),
        SkillType::MoveContact => move_contact(s_in, [p[0], p[1], p[2]], p[3], p[4], p[5], world),
        SkillType::SpiralSearch => spiral_search(s_in, p[0], p[1], p[2], p[3], p[4], world),
        SkillType::Insert => insert(s_in, p[0], p[1], p[2], world),
        SkillType::GripperClose => {
            SkillOutcome::ok(TcpState { holding: true, ..s_in }, GRIPPER_TIME, 0.0)
        }
        SkillType::GripperOpen => {
            SkillOutcome::ok(TcpState { holding: false, ..s_in }, GRIPPER_TIME, 0.0)
        }
    }
}

/// Trapezoidal (or triangular) velocity profile time for distance `d`.
pub(crate) fn profile_time(d: f64, v: f64, a: f64) -> f64 {
    if d <= 0.0 {
        0.0
    } else if d >= v * v / a {
        d / v + v / a
    } else {
        2.0 * (d / a).sqrt()
    }
}

/// Parameter interval `(lo, hi)` of `t` in [0, 1] where `c0 + c1·t < 0`.
fn linear_negative(c0: f64, c1: f64) -> Option<(f64, f64)> {
    if c1 == 0.0 {
        return (c0 < 0.0).then_some((0.0, 1.0));
    }
    let root = -c0 / c1;
    let (lo, hi) = if c1 > 0.0 { (0.0, root) } else { (root, 1.0) };
    let (lo, hi) = (lo.max(0.0), hi.min(1.0));
    (lo < hi).then_some((lo, hi))
}

fn intersect(a: (f64, f64), b: (f64, f64)) -> Option<(f64, f64)> {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    (lo < hi).then_some((lo, hi))
}

/// First parameter in [0, 1] at which the segment `p0 → p1` enters solid
/// material: below the surface outside the hole footprint, or below the
/// hole bottom.
fn first_solid(p0: [f64; 3], p1: [f64; 3], w: &RealizedWorld) -> Option<f64> {
    let d = [p1[0] - p0[0], p1[1] - p0[1], p1[2] - p0[2]];
    let below_surface = linear_negative(p0[2] - w.surface_z, d[2])?;

    let mut candidates = Vec::new();
    if let Some(iv) = linear_negative(p0[2] - w.bottom_z(), d[2]).and_then(|b| intersect(below_surface, b)) {
        candidates.push(iv.0);
    }

    // planar distance² to the hole center: qa·t² + qb·t + qc
    let ox = p0[0] - w.hole[0];
    let oy = p0[1] - w.hole[1];
    let qa = d[0] * d[0] + d[1] * d[1];
    let qb = 2.0 * (ox * d[0] + oy * d[1]);
    let qc = ox * ox + oy * oy - w.clearance * w.clearance;
    let outside: Vec<(f64, f64)> = if qa == 0.0 {
        if qc > 0.0 { vec![(0.0, 1.0)] } else { vec![] }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc <= 0.0 {
            vec![(0.0, 1.0)]
        } else {
            let s = disc.sqrt();
            let ta = (-qb - s) / (2.0 * qa);
            let tb = (-qb + s) / (2.0 * qa);
            vec![(0.0, ta.min(1.0)), (tb.max(0.0), 1.0)]
        }
    };
    for iv in outside {
        if iv.0 < iv.1 {
            if let Some(x) = intersect(below_surface, iv) {
                candidates.push(x.0);
            }
        }
    }
    candidates.into_iter().reduce(f64::min)
}

fn move_linear(s_in: TcpState, target: [f64; 3], v: f64, a: f64, w: &RealizedWorld) -> SkillOutcome {
    let start = [s_in.x, s_in.y, s_in.z];
    let at = |p: [f64; 3]| TcpState { x: p[0], y: p[1], z: p[2], ..s_in };
    if !(v > 0.0 && a > 0.0) {
        return SkillOutcome::fail(s_in, 0.0, 0.0, Fault::InvalidParameter);
    }

    // leaving the hole (or a pressed contact) upward: withdraw vertically first
    let (withdraw, seg_start) = if s_in.z < w.surface_z && target[2] >= w.surface_z {
        (w.surface_z - s_in.z, [s_in.x, s_in.y, w.surface_z])
    } else {
        (0.0, start)
    };
    let seg_len = dist3(seg_start, target);
    let total = withdraw + seg_len;

    match first_solid(seg_start, target, w) {
        Some(t) if t < 1.0 => {
            let hit = lerp3(seg_start, target, t);
            let traveled = withdraw + t * seg_len;
            SkillOutcome::fail(at(hit), profile_time(traveled, v, a), 0.0, Fault::ContactFault)
        }
        _ => SkillOutcome::ok(at(target), profile_time(total, v, a), 0.0),
    }
}

fn move_contact(
    s_in: TcpState,
    dir: [f64; 3],
    v: f64,
    f_th: f64,
    max_d: f64,
    w: &RealizedWorld,
) -> SkillOutcome {
    let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    if !(norm > 0.0 && v > 0.0) || max_d < 0.0 {
        return SkillOutcome::fail(s_in, 0.0, 0.0, Fault::InvalidParameter);
    }
    let u = [dir[0] / norm, dir[1] / norm, dir[2] / norm];
    let plane = if s_in.z < w.surface_z && w.planar_distance(s_in.x, s_in.y) <= w.clearance {
        w.bottom_z()
    } else {
        w.surface_z
    };
    let k = w.contact_stiffness;
    let advance = |d: f64| TcpState { x: s_in.x + u[0] * d, y: s_in.y + u[1] * d, z: s_in.z + u[2] * d, ..s_in };

    // force reaches f_th at z = plane - f_th/k
    let z_contact = plane - f_th.max(0.0) / k;
    let needed = if s_in.z <= z_contact {
        Some(0.0)
    } else if u[2] < 0.0 {
        Some((s_in.z - z_contact) / -u[2])
    } else {
        None
    };
    match needed {
        Some(d) if d <= max_d => SkillOutcome::ok(advance(d), d / v + SETTLE_TIME, f_th.max(0.0)),
        _ => {
            let out = advance(max_d);
            let force = (k * (plane - out.z)).max(0.0);
            SkillOutcome::fail(out, max_d / v + SETTLE_TIME, force, Fault::NoContact)
        }
    }
}

fn spiral_search(
    s_in: TcpState,
    r_max: f64,
    pitch: f64,
    v: f64,
    f_press: f64,
    dz_drop: f64,
    w: &RealizedWorld,
) -> SkillOutcome {
    if (s_in.z - w.surface_z).abs() > CONTACT_TOLERANCE {
        return SkillOutcome::fail(s_in, 0.0, 0.0, Fault::PreconditionFault);
    }
    if !(pitch > 0.0 && v > 0.0) {
        return SkillOutcome::fail(s_in, 0.0, 0.0, Fault::InvalidParameter);
    }
    let trace = SpiralTrace::new(pitch, v * DT);
    // the band r ± pitch/2 has covered r_max once r exceeds r_max + pitch/2
    let r_limit = r_max + pitch / 2.0;
    let force = f_press.max(0.0);
    for (step, (r, phi)) in trace.enumerate() {
        let x = s_in.x + r * phi.cos();
        let y = s_in.y + r * phi.sin();
        let duration = step as f64 * DT;
        if w.planar_distance(x, y) <= w.clearance {
            let out = TcpState { x, y, z: s_in.z - dz_drop, ..s_in };
            return SkillOutcome::ok(out, duration, force);
        }
        if r > r_limit {
            return SkillOutcome::fail(TcpState { x, y, ..s_in }, duration, force, Fault::SearchExhausted);
        }
    }
    unreachable!("spiral trace is unbounded")
}

/// Samples of an Archimedean spiral `r = pitch/(2π)·φ` at fixed arc-length
/// increments, integrated with the midpoint rule. Yields `(r, φ)`.
pub(crate) struct SpiralTrace {
    c: f64,
    ds: f64,
    phi: f64,
}

impl SpiralTrace {
    pub(crate) fn new(pitch: f64, ds: f64) -> Self {
        Self { c: pitch / TAU, ds, phi: 0.0 }
    }
}

impl Iterator for SpiralTrace {
    type Item = (f64, f64);

    fn next(&mut self) -> Option<(f64, f64)> {
        let out = (self.c * self.phi, self.phi);
        // dφ/ds = 1 / (c·sqrt(1 + φ²))
        let rate = |phi: f64| 1.0 / (self.c * (1.0 + phi * phi).sqrt());
        let mid = self.phi + 0.5 * self.ds * rate(self.phi);
        self.phi += self.ds * rate(mid);
        Some(out)
    }
}

#[allow(clippy::neg_cmp_op_on_partial_ord)]
fn insert(s_in: TcpState, depth: f64, v: f64, f_max: f64, w: &RealizedWorld) -> SkillOutcome {
    if !(v > 0.0) {
        return SkillOutcome::fail(s_in, 0.0, 0.0, Fault::InvalidParameter);
    }
    let force = f_max.max(0.0);
    if w.planar_distance(s_in.x, s_in.y) > w.clearance {
        return SkillOutcome::fail(s_in, JAM_TRAVEL / v, force, Fault::Jam);
    }
    let target = w.surface_z - depth;
    if target < w.bottom_z() {
        let travel = (s_in.z - w.bottom_z()).max(0.0);
        let out = TcpState { z: s_in.z.min(w.bottom_z()), ..s_in };
        return SkillOutcome::fail(out, travel / v, force, Fault::Jam);
    }
    let travel = (s_in.z - target).max(0.0);
    SkillOutcome::ok(TcpState { z: s_in.z.min(target), ..s_in }, travel / v, 0.0)
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
}
