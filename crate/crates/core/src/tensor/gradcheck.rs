use super::{ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter id and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
}

/// Max over all parameter entries of `|g_ad - g_fd| / max(1, |g_fd|)`, where
/// `g_fd` is the central difference with step `eps`. `f` must be deterministic.
pub fn gradient_check<F>(store: &mut ParamStore, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let analytic = {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        tape.backward(loss)?
    };
    let ids: Vec<ParamId> = store.iter().map(|(pid, _)| pid).collect();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape)?;
        Ok(tape.scalar(loss))
    };
    for pid in ids {
        let n = store.value(pid).len();
        let ad: Vec<f64> = analytic
            .param(pid)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![0.0; n]);
        for (i, g_ad) in ad.iter().enumerate() {
            let orig = store.value(pid).data()[i];
            store.value_mut(pid).data_mut()[i] = orig + eps;
            let plus = eval(store)?;
            store.value_mut(pid).data_mut()[i] = orig - eps;
            let minus = eval(store)?;
            store.value_mut(pid).data_mut()[i] = orig;
            let g_fd = (plus - minus) / (2.0 * eps);
            let err = (g_ad - g_fd).abs() / g_fd.abs().max(1.0);
            report.entries_checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err;
                report.worst = Some((store.get(pid).id.clone(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn identity_sum_is_exact() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::vector(vec![0.1, 0.2, -4.0])).unwrap();
        let r = gradient_check(&mut store, 1e-5, |t| {
            let v = t.param(p);
            Ok(t.sum(v))
        })
        .unwrap();
        assert!(r.max_relative_error < 1e-10, "{}", r.max_relative_error);
        assert_eq!(r.entries_checked, 3);
    }

    #[test]
    fn zero_step_rejected() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::vector(vec![1.0])).unwrap();
        let r = gradient_check(&mut store, 0.0, |t| {
            let v = t.param(p);
            Ok(t.sum(v))
        });
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // A constant copy of the parameter hides its dependency from the tape.
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::vector(vec![2.0])).unwrap();
        let r = gradient_check(&mut store, 1e-5, |t| {
            let v = t.param(p);
            let frozen = t.vector(t.value(v).to_vec());
            let sq = t.mul(v, frozen)?;
            Ok(t.sum(sq))
        })
        .unwrap();
        assert!(r.max_relative_error > 0.1);
    }
}
