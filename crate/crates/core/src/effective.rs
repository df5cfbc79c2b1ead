//! Leading-order modulation equations
//! `ȧ = v`, `v̇ = -2∇V_h(a, t)`, `γ̇ = mu + v²/4 - V_h(a, t)`, `μ̇ = 0`,
//! integrated per soliton with classical RK4.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SolitonParams;
use crate::solver::PotentialSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveState {
    pub sigmas: Vec<SolitonParams>,
    pub t: f64,
}

impl EffectiveState {
    pub fn new(sigmas: Vec<SolitonParams>, t: f64) -> Self {
        Self { sigmas, t }
    }

    pub fn pair(sigma1: SolitonParams, sigma2: SolitonParams, t: f64) -> Self {
        Self::new(vec![sigma1, sigma2], t)
    }

    pub fn sigma1(&self) -> SolitonParams {
        self.sigmas[0]
    }

    pub fn sigma2(&self) -> Option<SolitonParams> {
        self.sigmas.get(1).copied()
    }
}

/// Time derivative of one soliton's parameters.
pub fn particle_rhs(s: &SolitonParams, t: f64, potential: &PotentialSpec) -> [f64; 4] {
    [
        s.v,
        -2.0 * potential.gradient(s.a, t),
        s.mu + 0.25 * s.v * s.v - potential.value(s.a, t),
        0.0,
    ]
}

/// Vector field of the full (uncoupled) system, soliton-major.
pub fn rhs(state: &EffectiveState, potential: &PotentialSpec) -> Vec<[f64; 4]> {
    state
        .sigmas
        .iter()
        .map(|s| particle_rhs(s, state.t, potential))
        .collect()
}

fn add_scaled(s: &SolitonParams, k: &[f64; 4], h: f64) -> SolitonParams {
    SolitonParams::new(s.a + h * k[0], s.v + h * k[1], s.gamma + h * k[2], s.mu + h * k[3])
}

fn rk4_particle(s: &SolitonParams, t: f64, dt: f64, potential: &PotentialSpec) -> SolitonParams {
    let k1 = particle_rhs(s, t, potential);
    let k2 = particle_rhs(&add_scaled(s, &k1, 0.5 * dt), t + 0.5 * dt, potential);
    let k3 = particle_rhs(&add_scaled(s, &k2, 0.5 * dt), t + 0.5 * dt, potential);
    let k4 = particle_rhs(&add_scaled(s, &k3, dt), t + dt, potential);
    let mut out = [0.0; 4];
    for (i, o) in out.iter_mut().enumerate() {
        *o = s.to_array()[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    // mu is exactly constant
    out[3] = s.mu;
    SolitonParams::from_array(out)
}

/// One RK4 step of size `dt`.
pub fn rk4_step(state: &EffectiveState, potential: &PotentialSpec, dt: f64) -> EffectiveState {
    EffectiveState {
        sigmas: state
            .sigmas
            .iter()
            .map(|s| rk4_particle(s, state.t, dt, potential))
            .collect(),
        t: state.t + dt,
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("time step dt = {dt} must be positive")));
    }
    Ok(())
}

/// Trajectory from `state0.t` to `t1` (inclusive) with the step shortened so
/// that `t1` is reached exactly.
pub fn integrate(
    state0: &EffectiveState,
    potential: &PotentialSpec,
    t1: f64,
    dt: f64,
) -> Result<Vec<EffectiveState>> {
    check_dt(dt)?;
    let span = t1 - state0.t;
    if span < 0.0 {
        return Err(Error::Config(format!("end time {t1} before start {}", state0.t)));
    }
    let steps = (span / dt - 1e-9).ceil().max(0.0) as usize;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(state0.clone());
    if steps == 0 {
        return Ok(out);
    }
    let h = span / steps as f64;
    let mut state = state0.clone();
    for k in 1..=steps {
        state = rk4_step(&state, potential, h);
        state.t = state0.t + k as f64 * h;
        out.push(state.clone());
    }
    Ok(out)
}

/// States at the requested (nondecreasing) times, stepping with at most `dt`.
pub fn integrate_sampled(
    state0: &EffectiveState,
    potential: &PotentialSpec,
    times: &[f64],
    dt: f64,
) -> Result<Vec<EffectiveState>> {
    check_dt(dt)?;
    let mut state = state0.clone();
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        if t < state.t - 1e-12 {
            return Err(Error::Config(format!("sample times must be nondecreasing ({t})")));
        }
        let span = t - state.t;
        let steps = (span / dt - 1e-9).ceil().max(0.0) as usize;
        if steps > 0 {
            let h = span / steps as f64;
            let t0 = state.t;
            for k in 1..=steps {
                state = rk4_step(&state, potential, h);
                state.t = t0 + k as f64 * h;
            }
        }
        state.t = t;
        out.push(state.clone());
    }
    Ok(out)
}

/// `v²/4 + V_h(a, t)`, conserved for autonomous potentials.
pub fn classical_energy(s: &SolitonParams, potential: &PotentialSpec, t: f64) -> f64 {
    0.25 * s.v * s.v + potential.value(s.a, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::PotentialBase;
    use proptest::prelude::*;

    fn bump(h: f64) -> PotentialSpec {
        PotentialSpec::new(
            PotentialBase::Gaussian {
                amplitude: 1.0,
                width: 1.0,
            },
            h,
        )
        .unwrap()
    }

    #[test]
    fn free_vector_field() {
        let st = EffectiveState::pair(
            SolitonParams::new(-1.0, 2.0, 0.0, 1.0),
            SolitonParams::new(3.0, -4.0, 0.5, 2.0),
            0.0,
        );
        let d = rhs(&st, &PotentialSpec::zero());
        assert_eq!(d[0], [2.0, 0.0, 2.0, 0.0]);
        assert_eq!(d[1], [-4.0, 0.0, 6.0, 0.0]);
    }

    #[test]
    fn crest_has_no_force_and_rhs_shares_gradient() {
        let cos = PotentialSpec::new(
            PotentialBase::Cosine {
                amplitude: 1.0,
                wavenumber: 1.0,
            },
            0.3,
        )
        .unwrap();
        let d = particle_rhs(&SolitonParams::new(0.0, 1.0, 0.0, 1.0), 0.0, &cos);
        assert_eq!(d[1], 0.0);
        let p = bump(0.2);
        let s = SolitonParams::new(1.7, 0.4, 0.0, 1.0);
        assert_eq!(particle_rhs(&s, 0.0, &p)[1], -2.0 * p.gradient(1.7, 0.0));
    }

    #[test]
    fn free_flow_is_exact() {
        let s1 = SolitonParams::new(-1.0, 2.0, 0.1, 1.0);
        let s2 = SolitonParams::new(3.0, -4.0, 0.5, 2.0);
        let traj = integrate(&EffectiveState::pair(s1, s2, 0.0), &PotentialSpec::zero(), 3.0, 1e-2).unwrap();
        let last = traj.last().unwrap();
        assert_eq!(last.t, 3.0);
        let a = last.sigma1();
        assert!((a.a - (s1.a + 3.0 * s1.v)).abs() <= 1e-12);
        assert!((a.gamma - (s1.gamma + 3.0 * (1.0 + 1.0))).abs() <= 1e-12);
        let b = last.sigma2().unwrap();
        assert!((b.gamma - (s2.gamma + 3.0 * (2.0 + 4.0))).abs() <= 1e-12);
    }

    #[test]
    fn classical_energy_is_conserved() {
        let p = bump(0.5);
        let s = SolitonParams::new(-4.0, 1.5, 0.0, 1.0);
        let traj = integrate(&EffectiveState::new(vec![s], 0.0), &p, 50.0, 1e-3).unwrap();
        let e0 = classical_energy(&s, &p, 0.0);
        let worst = traj
            .iter()
            .map(|st| (classical_energy(&st.sigma1(), &p, st.t) - e0).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-8, "{worst:e}");
    }

    #[test]
    fn fourth_order_convergence() {
        let p = bump(0.8);
        let s = SolitonParams::new(-2.0, 1.0, 0.0, 1.0);
        let end = |dt: f64| {
            integrate(&EffectiveState::new(vec![s], 0.0), &p, 4.0, dt)
                .unwrap()
                .last()
                .unwrap()
                .sigma1()
        };
        let reference = end(1e-4);
        let e1 = (end(0.1).a - reference.a).abs();
        let e2 = (end(0.05).a - reference.a).abs();
        let ratio = e1 / e2;
        assert!((13.0..19.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn sampled_matches_dense() {
        let p = bump(0.3);
        let st = EffectiveState::new(vec![SolitonParams::new(-1.0, 0.7, 0.0, 1.0)], 0.0);
        let dense = integrate(&st, &p, 2.0, 1e-3).unwrap();
        let sampled = integrate_sampled(&st, &p, &[0.0, 1.0, 2.0], 1e-3).unwrap();
        assert_eq!(sampled[0], st);
        assert!((sampled[2].sigma1().a - dense.last().unwrap().sigma1().a).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn mu_is_exactly_constant(a in -5.0f64..5.0, v in -3.0f64..3.0, mu in 0.5f64..4.0) {
            let p = bump(0.4);
            let st = EffectiveState::new(vec![SolitonParams::new(a, v, 0.0, mu)], 0.0);
            let traj = integrate(&st, &p, 1.0, 0.05).unwrap();
            prop_assert!(traj.iter().all(|s| s.sigma1().mu == mu));
        }
    }
}
