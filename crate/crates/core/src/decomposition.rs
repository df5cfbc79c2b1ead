//! Skew-orthogonal decomposition `psi = Σ u_σi + w` with `ω(w, e_β u_σi) = 0`
//! for every frame vector, by Newton iteration on the stacked pairings.
//!
//! The two-soliton case is the main one; a single soliton is handled by the
//! same code (the `_n` entry points take any number of solitons).

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{symplectic, Grid, SolitonParams, WaveField};
use crate::manifold::{tangent_frame, TangentFrame, FRAME_SIZE};
use crate::nonlinearity::NonlinearitySpec;
use crate::profiles::{solve_profile_seeded, SolitonProfile};

pub const MAX_NEWTON: usize = 50;
pub const CONDITION_LIMIT: f64 = 1e12;
const FD_RELATIVE_STEP: f64 = 1e-6;

/// Admissible frequencies `I₀`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MuInterval {
    pub lo: f64,
    pub hi: f64,
}

impl Default for MuInterval {
    fn default() -> Self {
        Self { lo: 0.5, hi: 4.0 }
    }
}

impl MuInterval {
    pub fn contains(&self, mu: f64) -> bool {
        mu >= self.lo && mu <= self.hi
    }
}

/// Bounded cache of profiles on one grid, keyed by the exact bits of `mu`.
/// Misses are warm-started from the nearest cached frequency.
pub struct ProfileCache {
    spec: NonlinearitySpec,
    grid: Grid,
    interval: MuInterval,
    capacity: usize,
    entries: Mutex<VecDeque<Arc<SolitonProfile>>>,
}

impl ProfileCache {
    pub fn new(spec: NonlinearitySpec, grid: Grid) -> Self {
        Self::with_interval(spec, grid, MuInterval::default())
    }

    pub fn with_interval(spec: NonlinearitySpec, grid: Grid, interval: MuInterval) -> Self {
        Self {
            spec,
            grid,
            interval,
            capacity: 64,
            entries: Mutex::new(VecDeque::new()),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spec(&self) -> &NonlinearitySpec {
        &self.spec
    }

    pub fn interval(&self) -> MuInterval {
        self.interval
    }

    pub fn get(&self, mu: f64) -> Result<Arc<SolitonProfile>> {
        if !self.interval.contains(mu) {
            return Err(Error::Domain(format!(
                "mu = {mu} outside [{}, {}]",
                self.interval.lo, self.interval.hi
            )));
        }
        let near = {
            let mut entries = self.entries.lock().expect("profile cache poisoned");
            if let Some(pos) = entries.iter().position(|p| p.mu.to_bits() == mu.to_bits()) {
                let hit = entries.remove(pos).expect("index in range");
                entries.push_front(hit.clone());
                return Ok(hit);
            }
            entries
                .iter()
                .filter(|p| (p.mu - mu).abs() <= 0.2 * mu)
                .min_by(|a, b| (a.mu - mu).abs().total_cmp(&(b.mu - mu).abs()))
                .cloned()
        };
        let profile = Arc::new(solve_profile_seeded(&self.spec, mu, &self.grid, near.as_deref())?);
        let mut entries = self.entries.lock().expect("profile cache poisoned");
        entries.push_front(profile.clone());
        entries.truncate(self.capacity);
        Ok(profile)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("profile cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct DecompositionResult {
    pub sigmas: Vec<SolitonParams>,
    pub fluctuation: WaveField,
    /// Max-abs of the stacked pairing vector.
    pub residual_norm: f64,
    pub iterations: usize,
    pub w_l2: f64,
}

impl DecompositionResult {
    pub fn sigma1(&self) -> SolitonParams {
        self.sigmas[0]
    }

    pub fn sigma2(&self) -> Option<SolitonParams> {
        self.sigmas.get(1).copied()
    }

    pub fn time(&self) -> f64 {
        self.fluctuation.time
    }
}

fn pack(sigmas: &[SolitonParams]) -> Vec<f64> {
    sigmas.iter().flat_map(|s| s.to_array()).collect()
}

fn unpack(x: &[f64]) -> Vec<SolitonParams> {
    x.chunks_exact(FRAME_SIZE)
        .map(|c| SolitonParams::from_array([c[0], c[1], c[2], c[3]]))
        .collect()
}

struct Evaluation {
    residual: Vec<f64>,
    fluctuation: WaveField,
}

fn frames_for(psi: &WaveField, sigmas: &[SolitonParams], cache: &ProfileCache) -> Result<Vec<TangentFrame>> {
    psi.grid.ensure_same(cache.grid())?;
    sigmas
        .iter()
        .map(|s| {
            if !s.is_finite() {
                return Err(Error::Domain(format!("non-finite parameters {s:?}")));
            }
            let profile = cache.get(s.mu)?;
            tangent_frame(&profile, s, &psi.grid)
        })
        .collect()
}

fn evaluate(psi: &WaveField, sigmas: &[SolitonParams], cache: &ProfileCache) -> Result<Evaluation> {
    let frames = frames_for(psi, sigmas, cache)?;
    let mut w = psi.clone();
    for f in &frames {
        w = w.sub(&f.soliton)?;
    }
    let mut residual = Vec::with_capacity(FRAME_SIZE * frames.len());
    for f in &frames {
        for v in &f.vectors {
            residual.push(symplectic(&w, v)?);
        }
    }
    Ok(Evaluation {
        residual,
        fluctuation: w,
    })
}

/// Stacked pairings `ω(psi - Σ u_σj, e_β u_σi)`, soliton-major.
pub fn g_residual_n(psi: &WaveField, sigmas: &[SolitonParams], cache: &ProfileCache) -> Result<Vec<f64>> {
    Ok(evaluate(psi, sigmas, cache)?.residual)
}

pub fn g_residual(
    psi: &WaveField,
    sigma1: &SolitonParams,
    sigma2: &SolitonParams,
    cache: &ProfileCache,
) -> Result<Vec<f64>> {
    g_residual_n(psi, &[*sigma1, *sigma2], cache)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Central-difference Jacobian of the pairing vector.
pub fn fd_jacobian(psi: &WaveField, sigmas: &[SolitonParams], cache: &ProfileCache) -> Result<DMatrix<f64>> {
    fd_jacobian_at(psi, &pack(sigmas), cache)
}

fn fd_jacobian_at(psi: &WaveField, x: &[f64], cache: &ProfileCache) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n, n);
    for k in 0..n {
        let h = FD_RELATIVE_STEP * x[k].abs().max(1.0);
        let mut xp = x.to_vec();
        xp[k] += h;
        let gp = g_residual_n(psi, &unpack(&xp), cache)?;
        xp[k] = x[k] - h;
        let gm = g_residual_n(psi, &unpack(&xp), cache)?;
        for i in 0..n {
            jac[(i, k)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

pub fn tolerance(psi: &WaveField) -> f64 {
    1e-10 * (1.0 + psi.l2_norm().powi(2))
}

/// Newton solve of `G(psi, σ) = 0` from the given guesses.
pub fn decompose_n(psi: &WaveField, guesses: &[SolitonParams], cache: &ProfileCache) -> Result<DecompositionResult> {
    psi.ensure_finite()?;
    let tol = tolerance(psi);
    let mut x = pack(guesses);
    let mut eval = evaluate(psi, guesses, cache)?;
    let mut res = max_abs(&eval.residual);
    let mut iterations = 0;
    let mut polish = 0;

    let result = |x: &[f64], eval: Evaluation, res: f64, iterations: usize| DecompositionResult {
        sigmas: unpack(x),
        w_l2: eval.fluctuation.l2_norm(),
        fluctuation: eval.fluctuation,
        residual_norm: res,
        iterations,
    };

    let conditioned = |x: &[f64]| -> Result<DMatrix<f64>> {
        let jac = fd_jacobian_at(psi, x, cache)?;
        let sv = jac.clone().singular_values();
        let condition = sv.max() / sv.min();
        if !(condition <= CONDITION_LIMIT) {
            return Err(Error::DegenerateFrame { condition });
        }
        Ok(jac)
    };

    loop {
        if res <= tol {
            // a couple of extra steps while they still pay off
            if polish >= 2 || res <= 1e-4 * tol {
                if iterations == 0 {
                    // an exact guess still has to be an isolated solution
                    conditioned(&x)?;
                }
                return Ok(result(&x, eval, res, iterations));
            }
            polish += 1;
        }
        if iterations >= MAX_NEWTON {
            let residual = res;
            return Err(Error::DecompositionDiverged {
                iterations,
                residual,
                best: Box::new(result(&x, eval, res, iterations)),
            });
        }
        let jac = conditioned(&x)?;
        let rhs = DVector::from_column_slice(&eval.residual);
        let delta = jac
            .lu()
            .solve(&rhs)
            .ok_or(Error::DegenerateFrame { condition: f64::INFINITY })?;
        iterations += 1;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..8 {
            let trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(xi, di)| xi - step * di).collect();
            match evaluate(psi, &unpack(&trial), cache) {
                Ok(e) => {
                    let r = max_abs(&e.residual);
                    if r < res {
                        accepted = Some((trial, e, r));
                        break;
                    }
                }
                Err(Error::Domain(_)) | Err(Error::Placement { .. }) => {}
                Err(e) => return Err(e),
            }
            step *= 0.5;
        }
        match accepted {
            Some((trial, e, r)) => {
                x = trial;
                eval = e;
                res = r;
            }
            None if res <= tol => return Ok(result(&x, eval, res, iterations)),
            None => {
                return Err(Error::DecompositionDiverged {
                    iterations,
                    residual: res,
                    best: Box::new(result(&x, eval, res, iterations)),
                })
            }
        }
    }
}

pub fn decompose(
    psi: &WaveField,
    guess1: &SolitonParams,
    guess2: &SolitonParams,
    cache: &ProfileCache,
) -> Result<DecompositionResult> {
    decompose_n(psi, &[*guess1, *guess2], cache)
}

/// Free-flight prediction `a += v Δt`, `gamma += (mu + v²/4) Δt`.
pub fn predict(sigma: &SolitonParams, dt: f64) -> SolitonParams {
    SolitonParams::new(
        sigma.a + sigma.v * dt,
        sigma.v,
        sigma.gamma + (sigma.mu + 0.25 * sigma.v * sigma.v) * dt,
        sigma.mu,
    )
}

/// Frame-by-frame continuation of the decomposition.
pub struct Tracker<'a> {
    cache: &'a ProfileCache,
    last: Vec<SolitonParams>,
    last_time: Option<f64>,
    index: usize,
}

impl<'a> Tracker<'a> {
    pub fn new(cache: &'a ProfileCache, initial: &[SolitonParams]) -> Self {
        Self {
            cache,
            last: initial.to_vec(),
            last_time: None,
            index: 0,
        }
    }

    pub fn push(&mut self, frame: &WaveField) -> Result<DecompositionResult> {
        let guesses: Vec<SolitonParams> = match self.last_time {
            Some(t) => self.last.iter().map(|s| predict(s, frame.time - t)).collect(),
            None => self.last.clone(),
        };
        let out = decompose_n(frame, &guesses, self.cache).map_err(|e| Error::Tracking {
            index: self.index,
            source: Box::new(e),
        })?;
        self.last = out.sigmas.clone();
        self.last_time = Some(frame.time);
        self.index += 1;
        Ok(out)
    }

    pub fn frames_processed(&self) -> usize {
        self.index
    }
}

pub fn track<'f, I>(frames: I, initial: &[SolitonParams], cache: &ProfileCache) -> Result<Vec<DecompositionResult>>
where
    I: IntoIterator<Item = &'f WaveField>,
{
    let mut tracker = Tracker::new(cache, initial);
    frames.into_iter().map(|f| tracker.push(f)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{apply_transform, compose_group, synthesize};
    use crate::manifold::{cross_pairing, FRAME_SIZE};
    use num_complex::Complex64;

    fn setup() -> (ProfileCache, Grid) {
        let grid = Grid::new(96.0, 1024).unwrap();
        (ProfileCache::new(NonlinearitySpec::cubic(), grid), grid)
    }

    fn two(cache: &ProfileCache, s1: &SolitonParams, s2: &SolitonParams) -> WaveField {
        let g = *cache.grid();
        synthesize(&cache.get(s1.mu).unwrap(), s1, &g)
            .unwrap()
            .add(&synthesize(&cache.get(s2.mu).unwrap(), s2, &g).unwrap())
            .unwrap()
    }

    fn perturbed(s: &SolitonParams, d: f64) -> SolitonParams {
        SolitonParams::new(s.a + d, s.v - d, s.gamma + d, s.mu + d)
    }

    #[test]
    fn exact_sum_has_zero_residual() {
        let (cache, _) = setup();
        let s1 = SolitonParams::new(-10.0, 8.0, 0.3, 1.0);
        let s2 = SolitonParams::new(10.0, -8.0, 1.1, 1.5);
        let psi = two(&cache, &s1, &s2);
        let g = g_residual(&psi, &s1, &s2, &cache).unwrap();
        assert_eq!(g.len(), 2 * FRAME_SIZE);
        assert!(max_abs(&g) <= 1e-12);
    }

    #[test]
    fn residual_is_linear_along_a_frame_vector() {
        let (cache, grid) = setup();
        let s1 = SolitonParams::new(-10.0, 8.0, 0.3, 1.0);
        let s2 = SolitonParams::new(10.0, -8.0, 1.1, 1.5);
        let psi = two(&cache, &s1, &s2);
        let frame = tangent_frame(&cache.get(1.0).unwrap(), &s1, &grid).unwrap();
        let entry = symplectic(&frame.vectors[0], &frame.vectors[0]).unwrap();
        assert_eq!(entry, 0.0);
        let g = |eps: f64| {
            let p = psi.axpy(Complex64::new(eps, 0.0), &frame.vectors[0]).unwrap();
            g_residual(&p, &s1, &s2, &cache).unwrap()
        };
        let (a, b) = (g(1e-3), g(2e-3));
        for (x, y) in a.iter().zip(&b) {
            assert!((2.0 * x - y).abs() <= 1e-12);
        }
        let om12 = symplectic(&frame.vectors[0], &frame.vectors[1]).unwrap();
        assert!((a[1] - 1e-3 * om12).abs() <= 1e-12);
    }

    #[test]
    fn round_trip_and_uniqueness() {
        let (cache, _) = setup();
        let s1 = SolitonParams::new(-10.0, 8.0, 0.3, 1.0);
        let s2 = SolitonParams::new(10.0, -8.0, 1.1, 1.5);
        let psi = two(&cache, &s1, &s2);
        let r1 = decompose(&psi, &perturbed(&s1, 1e-2), &perturbed(&s2, -1e-2), &cache).unwrap();
        let r2 = decompose(&psi, &perturbed(&s1, -1e-2), &perturbed(&s2, 1e-2), &cache).unwrap();
        for (got, want) in [(r1.sigma1(), s1), (r1.sigma2().unwrap(), s2)] {
            for (a, b) in got.to_array().iter().zip(want.to_array()) {
                assert!((a - b).abs() <= 1e-9, "{got:?} vs {want:?}");
            }
        }
        assert!(r1.w_l2 <= 1e-9);
        for (a, b) in pack(&r1.sigmas).iter().zip(pack(&r2.sigmas)) {
            assert!((a - b).abs() <= 1e-9);
        }
        // reconstruction identity
        let back = r1
            .fluctuation
            .add(&two(&cache, &r1.sigma1(), &r1.sigma2().unwrap()))
            .unwrap();
        assert!(back.sub(&psi).unwrap().max_abs() <= 1e-12);
    }

    #[test]
    fn gauge_shift_moves_only_phases() {
        let (cache, _) = setup();
        let s1 = SolitonParams::new(-10.0, 8.0, 0.3, 1.0);
        let s2 = SolitonParams::new(10.0, -8.0, 1.1, 1.5);
        let theta = 0.4;
        let psi = two(&cache, &s1, &s2).scale(Complex64::from_polar(1.0, theta));
        let r = decompose(&psi, &s1, &s2, &cache).unwrap();
        assert!((r.sigma1().gamma - s1.gamma - theta).abs() <= 1e-9);
        assert!((r.sigma2().unwrap().gamma - s2.gamma - theta).abs() <= 1e-9);
        assert!((r.sigma1().a - s1.a).abs() <= 1e-9);
        assert!((r.sigma2().unwrap().mu - s2.mu).abs() <= 1e-9);
    }

    #[test]
    fn conjugated_frame_identity() {
        let (cache, _) = setup();
        let s1 = SolitonParams::new(-6.0, 4.0, 0.3, 1.0);
        let s2 = SolitonParams::new(9.0, -5.0, 1.1, 1.2);
        let psi = two(&cache, &s1, &s2);
        let inv = s1.group().inverse();
        let moved = apply_transform(inv, &psi);
        let g2 = compose_group(inv, s2.group());
        let guess2 = SolitonParams::new(g2.a, g2.v, g2.gamma, s2.mu);
        let r = decompose(&moved, &SolitonParams::at_rest(1.0), &guess2, &cache).unwrap();
        let b = r.sigma2().unwrap();
        assert!((b.a - (s2.a - s1.a)).abs() <= 1e-8);
        assert!((b.v - (s2.v - s1.v)).abs() <= 1e-8);
        assert!((b.gamma - (s2.gamma - s1.gamma - 0.5 * s1.v * (s2.a - s1.a))).abs() <= 1e-8);
        let a = r.sigma1();
        assert!(a.a.abs() <= 1e-8 && a.v.abs() <= 1e-8 && a.gamma.abs() <= 1e-8);
    }

    #[test]
    fn jacobian_blocks_match_pairings() {
        let (cache, grid) = setup();
        let s = [
            SolitonParams::new(-12.0, 3.0, 0.3, 1.0),
            SolitonParams::new(12.0, -2.0, 1.1, 1.5),
        ];
        let psi = two(&cache, &s[0], &s[1]);
        let jac = fd_jacobian(&psi, &s, &cache).unwrap();
        // ∂σ u in frame coordinates: ∂a = e1, ∂v = e2/2 - (a/2) e3, ∂γ = e3, ∂μ = e4
        for i in 0..2 {
            for j in 0..2 {
                let p = cross_pairing(&cache.get(s[i].mu).unwrap(), &s[i], &cache.get(s[j].mu).unwrap(), &s[j], &grid)
                    .unwrap();
                for beta in 0..FRAME_SIZE {
                    let d = [
                        p[(beta, 0)],
                        0.5 * p[(beta, 1)] - 0.5 * s[j].a * p[(beta, 2)],
                        p[(beta, 2)],
                        p[(beta, 3)],
                    ];
                    for alpha in 0..FRAME_SIZE {
                        let got = jac[(FRAME_SIZE * i + beta, FRAME_SIZE * j + alpha)];
                        // G = ω(w, e_β u_i), ∂w = -∂u_j  ⇒  J = ω(e_β u_i, ∂u_j)
                        assert!((got - d[alpha]).abs() <= 1e-5, "({i},{j},{beta},{alpha}): {got} vs {}", d[alpha]);
                    }
                }
            }
        }
    }

    #[test]
    fn coincident_solitons_are_degenerate() {
        let (cache, _) = setup();
        let s = SolitonParams::new(0.0, 0.0, 0.0, 1.0);
        let psi = two(&cache, &s, &s);
        let r = decompose(&psi, &s, &s, &cache);
        assert!(matches!(r, Err(Error::DegenerateFrame { .. })), "{r:?}");
    }

    #[test]
    fn mu_outside_interval_is_rejected() {
        let (cache, _) = setup();
        let s = SolitonParams::new(0.0, 0.0, 0.0, 1.0);
        let psi = two(&cache, &s, &SolitonParams::new(15.0, 0.0, 0.0, 1.0));
        let bad = SolitonParams::new(15.0, 0.0, 0.0, 5.0);
        assert!(matches!(g_residual(&psi, &s, &bad, &cache), Err(Error::Domain(_))));
    }

    #[test]
    fn tracking_constant_frames_is_constant() {
        let (cache, _) = setup();
        let s1 = SolitonParams::new(-10.0, 0.0, 0.3, 1.0);
        let s2 = SolitonParams::new(10.0, 0.0, 1.1, 1.0);
        let psi = two(&cache, &s1, &s2);
        let frames = vec![psi.clone(), psi.clone(), psi];
        let out = track(&frames, &[s1, s2], &cache).unwrap();
        for r in &out {
            assert!((r.sigma1().a - s1.a).abs() <= 1e-10);
            assert!((r.sigma2().unwrap().gamma - s2.gamma).abs() <= 1e-10);
        }
    }

    #[test]
    fn cache_is_bounded_and_reuses_entries() {
        let (cache, _) = setup();
        let a = cache.get(1.0).unwrap();
        let b = cache.get(1.0).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert!(cache.get(0.1).is_err());
        assert_eq!(cache.len(), 1);
    }
}
