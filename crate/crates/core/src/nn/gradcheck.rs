use rand::seq::index::sample;
use rand::Rng;

use super::ParamStore;
use crate::error::Result;

/// Denominator floor for relative errors, so that near-zero gradients are
/// compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Number of scalar coordinates compared.
    pub checked: usize,
    /// Parameters that were sampled; frozen ones are excluded.
    pub coverage: Vec<String>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the gradients stored in `params` against central differences of
/// `loss`. At most `per_param` coordinates of each unfrozen parameter are
/// sampled (all of them when `None`).
pub fn finite_difference_check<F, R>(
    params: &mut ParamStore,
    mut loss: F,
    delta: f64,
    per_param: Option<usize>,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<f64>,
    R: Rng,
{
    let names: Vec<String> = params
        .names()
        .filter(|n| !params.is_frozen(n))
        .map(str::to_string)
        .collect();
    let mut max_rel_error: f64 = 0.0;
    let mut checked = 0;
    for name in &names {
        let len = params.value(name)?.data().len();
        let coords: Vec<usize> = match per_param {
            Some(k) if k < len => sample(rng, len, k).into_vec(),
            _ => (0..len).collect(),
        };
        for i in coords {
            let analytic = params.grad(name)?.data()[i];
            let orig = params.value(name)?.data()[i];
            params.value_mut(name)?.data_mut()[i] = orig + delta;
            let up = loss(params)?;
            params.value_mut(name)?.data_mut()[i] = orig - delta;
            let down = loss(params)?;
            params.value_mut(name)?.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * delta);
            max_rel_error = max_rel_error.max(relative_error(analytic, numeric));
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error,
        checked,
        coverage: names,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sq_norm(p: &ParamStore) -> Result<f64> {
        Ok(p.iter()
            .map(|(_, q)| q.value.data().iter().map(|x| x * x).sum::<f64>())
            .sum())
    }

    #[test]
    fn quadratic_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamStore::new();
        let theta = Matrix::from_vec(2, 3, (0..6).map(|_| rng.random_range(-2.0..2.0)).collect())
            .unwrap();
        let grad = theta.map(|x| 2.0 * x);
        p.insert("theta", theta);
        p.accumulate_grad("theta", &grad).unwrap();
        let r = finite_difference_check(&mut p, sq_norm, 1e-5, None, &mut rng).unwrap();
        assert_eq!(r.checked, 6);
        assert!(r.max_rel_error < 1e-8, "{}", r.max_rel_error);
    }

    #[test]
    fn frozen_parameters_excluded_from_coverage() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = ParamStore::new();
        p.insert("a", Matrix::filled(1, 2, 1.0));
        p.insert("b", Matrix::filled(1, 2, 1.0));
        p.accumulate_grad("a", &Matrix::filled(1, 2, 2.0)).unwrap();
        p.set_frozen("b", true).unwrap();
        let r = finite_difference_check(&mut p, sq_norm, 1e-5, Some(1), &mut rng).unwrap();
        assert_eq!(r.coverage, vec!["a".to_string()]);
        assert_eq!(r.checked, 1);
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ParamStore::new();
        p.insert("a", Matrix::filled(1, 1, 1.0));
        p.accumulate_grad("a", &Matrix::filled(1, 1, 3.0)).unwrap();
        let r = finite_difference_check(&mut p, sq_norm, 1e-5, None, &mut rng).unwrap();
        assert!(r.max_rel_error > 0.3);
    }
}
