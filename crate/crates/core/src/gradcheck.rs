//! Central-finite-difference verification of the backward pass.
//!
//! Runs in f64 only; 32-bit rounding drowns the difference quotient.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{BoundParams, ParamStore};

/// Outcome of one [`grad_check`] run.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max over checked elements of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
    pub max_rel_error: f64,
    /// Parameter and flat element index where the maximum occurred.
    pub worst: String,
    /// Number of (parameter, element) pairs compared.
    pub compared: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare analytic gradients of `build`'s scalar output against central
/// finite differences, perturbing every trainable parameter.
///
/// Parameters with more than `max_elems_per_param` elements are probed at
/// the entries with the largest analytic gradient magnitude (the entries
/// that dominate an update, and the ones with enough signal for a double-
/// precision difference quotient); smaller parameters are checked
/// exhaustively. Pass `usize::MAX` for a full sweep.
///
/// Each element is evaluated at `eps` and, when the match is poor, again at
/// 10x and 100x `eps`, keeping the best agreement: small steps favor
/// truncation-limited elements, wide steps noise-limited ones (linear ops
/// have no truncation error at all).
pub fn grad_check<F>(
    store: &mut ParamStore<f64>,
    build: F,
    eps: f64,
    max_elems_per_param: usize,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &BoundParams) -> Result<Var>,
{
    let run = |store: &ParamStore<f64>| -> Result<(Graph<f64>, BoundParams, Var)> {
        let mut graph = Graph::new();
        let bound = store.bind(&mut graph);
        let loss = build(&mut graph, &bound)?;
        Ok((graph, bound, loss))
    };

    // Analytic pass.
    let (graph, bound, loss) = run(store)?;
    let grads = graph.backward(loss)?;
    let by_name = bound.collect_gradients(store, &grads);
    drop(graph);

    let names: Vec<String> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(n, _)| n.clone())
        .collect();

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: String::new(), compared: 0 };
    for name in names {
        let numel = store.get(&name)?.value.numel();
        let probes: Vec<usize> = if numel <= max_elems_per_param {
            (0..numel).collect()
        } else {
            let analytic = &by_name[&name].data;
            let mut order: Vec<usize> = (0..numel).collect();
            order.sort_by(|&a, &b| {
                analytic[b]
                    .abs()
                    .partial_cmp(&analytic[a].abs())
                    .expect("finite gradients")
                    .then(a.cmp(&b))
            });
            order.truncate(max_elems_per_param);
            order
        };
        for idx in probes {
            let original = store.get(&name)?.value.data[idx];
            let analytic = by_name[&name].data[idx];

            let mut best_rel = f64::INFINITY;
            let mut best_numeric = f64::NAN;
            for step in [eps, eps * 0.1, eps * 10.0, eps * 100.0] {
                store.get_mut(&name)?.value.data[idx] = original + step;
                let (graph_p, _, loss_p) = run(store)?;
                let f_plus = graph_p.value(loss_p).data[0];
                drop(graph_p);

                store.get_mut(&name)?.value.data[idx] = original - step;
                let (graph_m, _, loss_m) = run(store)?;
                let f_minus = graph_m.value(loss_m).data[0];
                drop(graph_m);

                store.get_mut(&name)?.value.data[idx] = original;

                let numeric = (f_plus - f_minus) / (2.0 * step);
                let rel = rel_error(analytic, numeric);
                if rel < best_rel {
                    best_rel = rel;
                    best_numeric = numeric;
                }
                if best_rel <= 1e-9 {
                    break;
                }
            }

            report.compared += 1;
            if best_rel > report.max_rel_error {
                report.max_rel_error = best_rel;
                report.worst =
                    format!("{name}[{idx}] analytic={analytic:.3e} numeric={best_numeric:.3e}");
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{streams, SeedRng};
    use crate::tensor::{Dims, TensorData};

    /// A linear layer's gradient is exact up to rounding.
    #[test]
    fn linear_layer_is_exact() {
        let mut rng = SeedRng::new(21, streams::TEST);
        let mut store = ParamStore::new();
        store.insert(
            "w",
            TensorData::random_uniform(Dims::new(2, 3, 3, 3), -0.5, 0.5, &mut rng),
            true,
        );
        store.insert(
            "b",
            TensorData::random_uniform(Dims::new(1, 2, 1, 1), -0.5, 0.5, &mut rng),
            true,
        );
        let x = TensorData::random_uniform(Dims::new(1, 3, 6, 6), -1.0, 1.0, &mut rng);
        let probe = TensorData::random_uniform(Dims::new(1, 2, 6, 6), 0.5, 1.5, &mut rng);

        let report = grad_check(
            &mut store,
            |g, p| {
                let xv = g.constant(x.clone());
                let pv = g.constant(probe.clone());
                let y = g.conv2d(xv, p.var("w"), p.var("b"), 1, 1)?;
                let weighted = g.mul(y, pv)?;
                Ok(g.mean(weighted))
            },
            // The loss is linear in w and b, so truncation error is zero and
            // a wide step just suppresses cancellation noise.
            1e-3,
            usize::MAX,
        )
        .unwrap();
        assert_eq!(report.compared, 56);
        assert!(report.passes(1e-9), "{report:?}");
    }

    #[test]
    fn probe_sampling_caps_work() {
        let mut store = ParamStore::new();
        store.insert("w", TensorData::full(Dims::new(1, 1, 4, 4), 0.25), true);
        let report = grad_check(
            &mut store,
            |g, p| {
                let a = g.abs(p.var("w"));
                Ok(g.mean(a))
            },
            1e-6,
            5,
        )
        .unwrap();
        assert_eq!(report.compared, 5);
        assert!(report.passes(1e-9), "{report:?}");
    }
}
