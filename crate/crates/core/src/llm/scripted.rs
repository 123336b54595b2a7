//! Deterministic stand-in for every agent, used for offline demos and
//! tests. Replies depend only on the request, the environment and a run
//! seed.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{CompletionRequest, MockBackend, Role};
use crate::dsl::{parse_expr, BinOp, Expr};
use crate::env::{rng, EnvName};
use crate::generator::code_blocks;

struct MetricScript {
    description: &'static str,
    rationale: &'static str,
    criteria: &'static str,
    step: &'static str,
    aggregate: &'static str,
    direction: &'static str,
}

struct EnvScript {
    states: &'static [(&'static str, &'static str)],
    actions: &'static [(&'static str, &'static str)],
    good: &'static str,
    distractors: [&'static str; 7],
    metrics: [MetricScript; 3],
}

const CARTPOLE: EnvScript = EnvScript {
    states: &[
        ("cart_pos", "cart position along the track (m)"),
        ("cart_vel", "cart velocity (m/s)"),
        ("pole_angle", "pole angle from vertical (rad)"),
        ("pole_ang_vel", "pole angular velocity (rad/s)"),
    ],
    actions: &[("cart_force", "horizontal force on the cart (N)")],
    good: "-(s.pole_angle^2) - 0.01*s.pole_ang_vel^2",
    distractors: [
        "s.cart_vel",
        "-abs(a.cart_force)",
        "s.pole_angle +",
        "tanh(s.cart_pos)",
        "a.cart_force^2",
        "exp(-abs(s.cart_vel))",
        "s.pole_ang_vel^2",
    ],
    metrics: [
        MetricScript {
            description: "mean squared pole angle",
            rationale: "square the pole angle at every logged step and average over all steps",
            criteria: "lower is better; zero means perfectly upright",
            step: "s.pole_angle^2",
            aggregate: "mean",
            direction: "minimize",
        },
        MetricScript {
            description: "fraction of steps with the pole within 0.05 rad of upright",
            rationale: "indicator of abs(pole angle) < 0.05 averaged over steps",
            criteria: "higher is better",
            step: "abs(s.pole_angle) < 0.05",
            aggregate: "mean",
            direction: "maximize",
        },
        MetricScript {
            description: "mean absolute pole angular velocity",
            rationale: "a balanced pole barely rotates",
            criteria: "lower is better",
            step: "abs(s.pole_ang_vel)",
            aggregate: "mean",
            direction: "minimize",
        },
    ],
};

const HOVER3D: EnvScript = EnvScript {
    states: &[
        ("x", "position x (m)"),
        ("y", "position y (m)"),
        ("z", "height (m)"),
        ("vx", "velocity x (m/s)"),
        ("vy", "velocity y (m/s)"),
        ("vz", "vertical velocity (m/s)"),
    ],
    actions: &[
        ("fx", "thrust along x (N)"),
        ("fy", "thrust along y (N)"),
        ("fz", "vertical thrust (N)"),
    ],
    good: "-sqrt(s.x^2 + s.y^2 + s.z^2) - 0.1*sqrt(s.vx^2 + s.vy^2 + s.vz^2)",
    distractors: [
        "s.z",
        "-s.vz^2",
        "a.fz",
        "-abs(a.fx) +",
        "s.x + s.y",
        "tanh(s.vx)",
        "-abs(s.vz - 1)",
    ],
    metrics: [
        MetricScript {
            description: "mean distance to the target point",
            rationale: "euclidean norm of the position at every step, averaged",
            criteria: "lower is better",
            step: "sqrt(s.x^2 + s.y^2 + s.z^2)",
            aggregate: "mean",
            direction: "minimize",
        },
        MetricScript {
            description: "fraction of steps within 0.1 m of the target",
            rationale: "indicator of distance below 0.1 averaged over steps",
            criteria: "higher is better",
            step: "sqrt(s.x^2 + s.y^2 + s.z^2) < 0.1",
            aggregate: "mean",
            direction: "maximize",
        },
        MetricScript {
            description: "mean speed",
            rationale: "a hovering body is nearly at rest",
            criteria: "lower is better",
            step: "sqrt(s.vx^2 + s.vy^2 + s.vz^2)",
            aggregate: "mean",
            direction: "minimize",
        },
    ],
};

const RUNNER1D: EnvScript = EnvScript {
    states: &[
        ("x", "forward position (m)"),
        ("vx", "forward velocity (m/s)"),
        ("energy_used", "accumulated mechanical work (J)"),
    ],
    actions: &[("drive_force", "forward drive force (N)")],
    good: "s.vx - 0.001*a.drive_force^2",
    distractors: [
        "-s.vx",
        "-abs(a.drive_force)",
        "-s.energy_used",
        "-s.x^2 *",
        "tanh(-s.vx)",
        "-a.drive_force^2",
        "sign(-s.vx)",
    ],
    metrics: [
        MetricScript {
            description: "mean forward velocity",
            rationale: "average vx over all steps",
            criteria: "higher is better",
            step: "s.vx",
            aggregate: "mean",
            direction: "maximize",
        },
        MetricScript {
            description: "mean forward velocity after the step",
            rationale: "average next-state vx",
            criteria: "higher is better",
            step: "sn.vx",
            aggregate: "mean",
            direction: "maximize",
        },
        MetricScript {
            description: "peak forward velocity",
            rationale: "largest vx reached",
            criteria: "higher is better",
            step: "s.vx",
            aggregate: "max",
            direction: "maximize",
        },
    ],
};

const DRAWER1D: EnvScript = EnvScript {
    states: &[
        ("gripper_pos", "gripper position (m)"),
        ("gripper_vel", "gripper velocity (m/s)"),
        ("drawer_pos", "drawer opening (m)"),
    ],
    actions: &[("gripper_force", "force on the gripper (N)")],
    good: "2*s.drawer_pos - abs(s.gripper_pos - s.drawer_pos) + (s.drawer_pos >= 0.35)",
    distractors: [
        "-s.drawer_pos",
        "-abs(a.gripper_force)",
        "-s.gripper_pos",
        "s.gripper_vel +",
        "-s.gripper_vel^2",
        "tanh(-s.gripper_pos)",
        "-abs(s.gripper_pos + 0.3)",
    ],
    metrics: [
        MetricScript {
            description: "fraction of steps with the drawer open at least 0.35",
            rationale: "indicator of drawer opening at or above 0.35 averaged over steps",
            criteria: "higher is better",
            step: "s.drawer_pos >= 0.35",
            aggregate: "mean",
            direction: "maximize",
        },
        MetricScript {
            description: "mean drawer opening",
            rationale: "average drawer position",
            criteria: "higher is better",
            step: "s.drawer_pos",
            aggregate: "mean",
            direction: "maximize",
        },
        MetricScript {
            description: "maximum drawer opening",
            rationale: "largest drawer position reached",
            criteria: "higher is better",
            step: "s.drawer_pos",
            aggregate: "max",
            direction: "maximize",
        },
    ],
};

fn script(env: EnvName) -> &'static EnvScript {
    match env {
        EnvName::Cartpole => &CARTPOLE,
        EnvName::Hover3d => &HOVER3D,
        EnvName::Runner1d => &RUNNER1D,
        EnvName::Drawer1d => &DRAWER1D,
    }
}

/// Scripted replies for one environment and one run.
pub struct DemoScript {
    env: EnvName,
    run_seed: u64,
}

impl DemoScript {
    pub fn for_env(env: EnvName, run_seed: u64) -> Self {
        Self { env, run_seed }
    }

    /// The reward the script plants in the first batch.
    pub fn known_good(&self) -> &'static str {
        script(self.env).good
    }

    pub fn into_backend(self) -> MockBackend {
        MockBackend::responder(move |req| self.respond(req))
    }

    pub fn respond(&self, req: &CompletionRequest) -> Option<String> {
        let s = script(self.env);
        let agent = req.context.agent.as_str();
        let last = req.last_user()?;
        if agent == "mapper" {
            return Some(mapping(s));
        }
        if agent == "generator" {
            let n = requested_count(last)?;
            return Some(match req.context.iteration {
                Some(1) | None => self.initial(s, n),
                Some(k) => {
                    let best = code_blocks(last).into_iter().next()?;
                    self.mutations(&best, n, k)
                }
            });
        }
        if agent == "generator-repair" {
            let code = code_blocks(last).into_iter().next()?;
            let fixed = code.trim_end_matches(|c: char| "+-*/^ ".contains(c));
            return Some(format!("```\n{fixed}\n```"));
        }
        let (analyzer, role) = agent.strip_prefix("analyzer")?.split_once('.')?;
        let j: usize = analyzer.parse().ok()?;
        match role {
            "planner" => {
                let turns = req.messages.iter().filter(|m| m.role == Role::User).count();
                if turns == 1 {
                    return Some(
                        "A successful agent keeps the task variables near their goal values \
                         for the whole episode; failure shows as drift or oscillation."
                            .into(),
                    );
                }
                let n = requested_metric_count(req)?;
                let mut out = String::new();
                for k in 0..n {
                    let m = &s.metrics[(j - 1 + k) % s.metrics.len()];
                    out.push_str(&format!(
                        "METRIC {}: {}\nRATIONALE: {}\nCRITERIA: {}\n\n",
                        k + 1,
                        m.description,
                        m.rationale,
                        m.criteria
                    ));
                }
                Some(out)
            }
            "coder" => {
                let first = req.messages.iter().find(|m| m.role == Role::User)?;
                let m = s
                    .metrics
                    .iter()
                    .find(|m| first.content.contains(&format!("Measurement: {}\n", m.description)))?;
                Some(format!(
                    "STEP: {}\nAGGREGATE: {}\nDIRECTION: {}",
                    m.step, m.aggregate, m.direction
                ))
            }
            _ => None,
        }
    }

    fn initial(&self, s: &EnvScript, n: usize) -> String {
        let mut pool: Vec<String> = std::iter::once(s.good.to_string())
            .chain(s.distractors.iter().map(|d| d.to_string()))
            .collect();
        let mut r = rng::stream("demo-initial", self.run_seed);
        pool.shuffle(&mut r);
        while pool.len() < n {
            let extra = perturb(s.good, &mut r);
            pool.push(extra);
        }
        pool.truncate(n);
        fenced(&pool)
    }

    fn mutations(&self, best: &str, n: usize, iteration: u32) -> String {
        let seed = rng::derive_seed(self.run_seed, rng::label_hash(&format!("{iteration}:{best}")));
        let mut r = rng::stream("demo-mutate", seed);
        let mut out = vec![best.to_string()];
        while out.len() < n {
            out.push(perturb(best, &mut r));
        }
        out.truncate(n);
        fenced(&out)
    }
}

fn fenced(codes: &[String]) -> String {
    let mut out = String::from("Here are the reward functions.\n\n");
    for c in codes {
        out.push_str(&format!("```\n{c}\n```\n\n"));
    }
    out
}

fn mapping(s: &EnvScript) -> String {
    let mut out = String::new();
    for (i, (name, note)) in s.states.iter().enumerate() {
        out.push_str(&format!("STATE {i}: {name} - {note}\n"));
    }
    for (i, (name, note)) in s.actions.iter().enumerate() {
        out.push_str(&format!("ACTION {i}: {name} - {note}\n"));
    }
    out
}

fn requested_count(prompt: &str) -> Option<usize> {
    let idx = prompt.find("Reply with ")?;
    prompt[idx + 11..].split_whitespace().next()?.parse().ok()
}

fn requested_metric_count(req: &CompletionRequest) -> Option<usize> {
    req.messages
        .iter()
        .filter(|m| m.role == Role::User)
        .find_map(|m| {
            let idx = m.content.find("propose ")?;
            m.content[idx + 8..].split_whitespace().next()?.parse().ok()
        })
}

/// Scale every constant except exponents and comparison thresholds by a
/// factor in [0.8, 1.2]. Without such constants, scale the whole
/// expression instead.
fn perturb(source: &str, r: &mut impl Rng) -> String {
    let Ok(expr) = parse_expr(source) else {
        return source.to_string();
    };
    let mut touched = false;
    let out = scale_consts(&expr, r, &mut touched);
    let out = if touched {
        out
    } else {
        Expr::binary(BinOp::Mul, Expr::Const(round4(r.random_range(0.8..1.2))), out)
    };
    out.to_string()
}

fn round4(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mag = 10f64.powi(3 - x.abs().log10().floor() as i32);
    (x * mag).round() / mag
}

fn scale_consts(e: &Expr, r: &mut impl Rng, touched: &mut bool) -> Expr {
    match e {
        Expr::Const(c) if *c != 0.0 => {
            *touched = true;
            Expr::Const(round4(c * r.random_range(0.8..1.2)))
        }
        Expr::Const(_) | Expr::Ref(_) | Expr::Compare(..) => e.clone(),
        Expr::Neg(inner) => Expr::neg(scale_consts(inner, r, touched)),
        Expr::Binary(BinOp::Pow, base, exp) => {
            Expr::binary(BinOp::Pow, scale_consts(base, r, touched), (**exp).clone())
        }
        Expr::Binary(op, a, b) => Expr::binary(*op, scale_consts(a, r, touched), scale_consts(b, r, touched)),
        Expr::Call(f, args) => Expr::Call(*f, args.iter().map(|a| scale_consts(a, r, touched)).collect()),
    }
}
