//! Central finite-difference checks of tape gradients.

use super::matrix::Matrix;
use super::rng::SeededRng;
use super::tape::{Tape, Var};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Largest disagreement between the second differences at the full and
/// half step still treated as smooth. Both estimate the curvature on a
/// smooth stretch, agreeing to rounding noise near 1e-5; a kink (a ReLU
/// changing sign) inside the step shifts them apart by jump/step.
pub const KINK_GAP: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Coordinates compared.
    pub coordinates: usize,
    /// Coordinates skipped because the step straddles a kink.
    pub kinks: usize,
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

fn eval<F>(f: &F, inputs: &[Matrix]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).get(0, 0))
}

/// Compares the tape gradient of the scalar recorded by `f` against
/// central differences. Inputs with more than `max_coords` entries are
/// checked on a random subset of that size. Coordinates where the step
/// crosses a kink are counted in [`GradCheck::kinks`] instead.
pub fn gradcheck<F>(
    inputs: &[Matrix],
    f: F,
    step: f64,
    max_coords: usize,
    rng: &mut SeededRng,
) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|m| tape.leaf(m.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let centre = tape.value(out).get(0, 0);
    let mut report = GradCheck {
        max_rel_error: 0.0,
        coordinates: 0,
        kinks: 0,
    };
    let mut work = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let mut coords: Vec<usize> = (0..input.len()).collect();
        if coords.len() > max_coords {
            rng.shuffle(&mut coords);
            coords.truncate(max_coords);
        }
        for k in coords {
            let analytic = grads.get(vars[i]).map_or(0.0, |g| g.data()[k]);
            let x = input.data()[k];
            let mut at = |dx: f64| -> Result<f64> {
                work[i].data_mut()[k] = x + dx;
                let v = eval(&f, &work);
                work[i].data_mut()[k] = x;
                v
            };
            let (up, down) = (at(step)?, at(-step)?);
            let (up_half, down_half) = (at(0.5 * step)?, at(-0.5 * step)?);
            let curve = (up - 2.0 * centre + down) / (step * step);
            let curve_half = (up_half - 2.0 * centre + down_half) / (0.25 * step * step);
            if (curve - curve_half).abs() > KINK_GAP {
                report.kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * step);
            report.max_rel_error = report.max_rel_error.max(rel_error(analytic, numeric));
            report.coordinates += 1;
        }
    }
    Ok(report)
}
