//! Central-difference gradient oracle.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::Result;
use crate::par;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Finite-difference step.
    pub h: f64,
    /// Check at most this many randomly chosen coordinates per parameter;
    /// `None` checks every coordinate.
    pub max_coords_per_param: Option<usize>,
    /// Restrict the check to these parameters (default: every trainable one).
    pub only: Option<Vec<ParamId>>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            h: 1e-6,
            max_coords_per_param: None,
            only: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoordCheck {
    pub param: ParamId,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl CoordCheck {
    pub fn rel_error(&self) -> f64 {
        relative_error(self.analytic, self.numeric)
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(parameter, coordinate, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
    /// Every checked coordinate, in parameter then index order.
    pub coords: Vec<CoordCheck>,
}

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Moves values closer than `10·h` to zero out to `±10·h` so that
/// central differences never straddle a ReLU kink.
pub fn nudge_from_kinks(t: &mut Tensor<f64>, h: f64) {
    for v in t.data_mut() {
        if v.abs() < 10.0 * h {
            *v = if *v < 0.0 { -10.0 * h } else { 10.0 * h };
        }
    }
}

/// Compares `backward()` against `(f(θ+h) − f(θ−h)) / 2h` for every selected
/// parameter coordinate and returns the largest relative error.
///
/// `f` must rebuild the same scalar loss on whatever graph it is handed and
/// be deterministic (reseed any dropout RNG inside `f`).
pub fn grad_check<F>(
    params: &ParamStore<f64>,
    f: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var> + Sync,
{
    let mut g = Graph::new(params);
    let loss = f(&mut g)?;
    let grads = g.backward(loss)?;
    drop(g);

    let ids: Vec<ParamId> = match &opts.only {
        Some(ids) => ids.clone(),
        None => params.trainable_ids().collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut coords: Vec<(ParamId, usize)> = Vec::new();
    for &id in &ids {
        let n = params.get(id).len();
        match opts.max_coords_per_param {
            Some(k) if k < n => {
                let mut picked = sample(&mut rng, n, k).into_vec();
                picked.sort_unstable();
                coords.extend(picked.into_iter().map(|c| (id, c)));
            }
            _ => coords.extend((0..n).map(|c| (id, c))),
        }
    }

    let h = opts.h;
    let numeric: Vec<Result<f64>> = par::map(coords.len(), |i| {
        let (id, c) = coords[i];
        let eval = |delta: f64| -> Result<f64> {
            let mut g = Graph::perturbed(params, id, c, delta);
            let v = f(&mut g)?;
            Ok(g.value(v).data()[0])
        };
        Ok((eval(h)? - eval(-h)?) / (2.0 * h))
    });

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: coords.len(),
        worst: None,
        coords: Vec::with_capacity(coords.len()),
    };
    for ((id, c), num) in coords.into_iter().zip(numeric) {
        let num = num?;
        let ana = grads.param(id).map_or(0.0, |g| g[c]);
        report.coords.push(CoordCheck {
            param: id,
            index: c,
            analytic: ana,
            numeric: num,
        });
        let err = relative_error(ana, num);
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            report.worst = Some((params.name(id).to_string(), c, ana, num));
        }
    }
    Ok(report)
}
