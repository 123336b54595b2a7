//! Semi-implicit Euler dynamics for the built-in environments.
//!
//! Each step writes the successor of `s` under the (already clipped)
//! action `a` into `out`.

use super::{DrawerParams, Dynamics};

pub(super) fn step(dynamics: &Dynamics, dt: f64, s: &[f64], a: &[f64], out: &mut [f64]) {
    match dynamics {
        Dynamics::Cartpole {
            gravity,
            cart_mass,
            pole_mass,
            pole_half_length,
        } => cartpole(*gravity, *cart_mass, *pole_mass, *pole_half_length, dt, s, a[0], out),
        Dynamics::Hover { gravity, mass, drag } => hover(*gravity, *mass, *drag, dt, s, a, out),
        Dynamics::Runner { mass, drag } => runner(*mass, *drag, dt, s, a[0], out),
        Dynamics::Drawer(p) => drawer(p, dt, s, a[0], out),
    }
}

#[allow(clippy::too_many_arguments)]
fn cartpole(g: f64, mc: f64, mp: f64, l: f64, dt: f64, s: &[f64], force: f64, out: &mut [f64]) {
    let (x, xd, th, thd) = (s[0], s[1], s[2], s[3]);
    let total = mc + mp;
    let (sin, cos) = th.sin_cos();
    let temp = (force + mp * l * thd * thd * sin) / total;
    let th_acc = (g * sin - cos * temp) / (l * (4.0 / 3.0 - mp * cos * cos / total));
    let x_acc = temp - mp * l * th_acc * cos / total;
    let xd1 = xd + dt * x_acc;
    let thd1 = thd + dt * th_acc;
    out[0] = x + dt * xd1;
    out[1] = xd1;
    out[2] = th + dt * thd1;
    out[3] = thd1;
}

fn hover(g: f64, m: f64, drag: f64, dt: f64, s: &[f64], f: &[f64], out: &mut [f64]) {
    for axis in 0..3 {
        let v = s[3 + axis];
        let gravity = if axis == 2 { -g } else { 0.0 };
        let acc = f[axis] / m + gravity - drag * v / m;
        let v1 = v + dt * acc;
        out[3 + axis] = v1;
        out[axis] = s[axis] + dt * v1;
    }
}

fn runner(m: f64, drag: f64, dt: f64, s: &[f64], force: f64, out: &mut [f64]) {
    let v1 = s[1] + dt * (force - drag * s[1]) / m;
    out[0] = s[0] + dt * v1;
    out[1] = v1;
    out[2] = s[2] + (force * v1).abs() * dt;
}

fn drawer(p: &DrawerParams, dt: f64, s: &[f64], force: f64, out: &mut [f64]) {
    let (gp, gv, dp) = (s[0], s[1], s[2]);
    let engaged = (gp - dp).abs() < p.engage_radius;
    if !engaged {
        let acc = (force - p.gripper_damping * gv) / p.gripper_mass;
        let gv1 = gv + dt * acc;
        let mut gp1 = gp + dt * gv1;
        // the handle blocks the gripper from passing through it
        if (gp < dp && gp1 > dp) || (gp > dp && gp1 < dp) {
            gp1 = dp;
        }
        out[0] = gp1;
        out[1] = gv1;
        out[2] = dp;
        return;
    }

    // Grasped: gripper and drawer share the gripper velocity.
    if gv == 0.0 && force.abs() <= p.static_friction {
        out[0] = gp;
        out[1] = 0.0;
        out[2] = dp;
        return;
    }
    let moving_sign = if gv != 0.0 { gv.signum() } else { force.signum() };
    let acc = (force - p.kinetic_friction * moving_sign) / (p.gripper_mass + p.drawer_mass);
    let mut v1 = gv + dt * acc;
    if gv != 0.0 && v1.signum() != gv.signum() {
        v1 = 0.0;
    }
    let mut dp1 = dp + dt * v1;
    if dp1 <= 0.0 {
        dp1 = 0.0;
        v1 = 0.0;
    } else if dp1 >= p.travel {
        dp1 = p.travel;
        v1 = 0.0;
    }
    out[0] = gp + (dp1 - dp);
    out[1] = v1;
    out[2] = dp1;
}
