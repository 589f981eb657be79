use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{BarrierCertificate, CertifyError};
use crate::model::DynSystem;
use crate::poly::{Interval, IntervalBox, Polynomial};
use crate::sampling::halton_point;

const MAX_SPLITS: usize = 200_000;
const POSITIVITY_SAMPLES: u64 = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct SublevelReport {
    /// certified lower bound on `min V` over the closed unsafe set in A
    pub level: f64,
    /// smallest `V` actually found at an unsafe or boundary point
    pub witnessed: f64,
    pub witness: Option<Vec<f64>>,
    pub splits: usize,
}

struct Node {
    lb: f64,
    seq: usize,
    bounds: Vec<Interval>,
}

impl PartialEq for Node {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

// reversed: the heap pops the smallest lower bound, oldest first
impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        o.lb.total_cmp(&self.lb).then(o.seq.cmp(&self.seq))
    }
}

/// Largest super-level set of `c - V` that avoids the unsafe set:
/// `c` is a certified lower bound on `V` over the part of the closed unsafe
/// set inside A, found by branch and bound with interval bounds. The result
/// is `h = c - V` with gain 1.
pub fn lyap_sublevel_bac(v: &Polynomial, sys: &DynSystem) -> Result<(BarrierCertificate, SublevelReport), CertifyError> {
    let v = v.with_vars(sys.state_space())?;
    let a = sys.admissible();
    for k in 0..POSITIVITY_SAMPLES {
        let x = halton_point(k, a);
        if v.eval_unchecked(&x) < 0.0 {
            return Err(CertifyError::NegativeLyapunov(x));
        }
    }
    if sys.unsafe_set().is_empty() {
        return Err(CertifyError::UnreachableUnsafeSet);
    }

    let vars = sys.state_space().clone();
    let feasible = |b: &[Interval]| -> Result<bool, CertifyError> {
        let bx = IntervalBox::new(vars.clone(), b.to_vec())?;
        for g in sys.unsafe_set() {
            if g.bound(&bx)?.lo <= 0.0 {
                return Ok(true);
            }
        }
        Ok(false)
    };
    let lower = |b: &[Interval]| -> Result<f64, CertifyError> {
        Ok(v.bound(&IntervalBox::new(vars.clone(), b.to_vec())?)?.lo)
    };
    let widths: Vec<f64> = a.bounds().iter().map(Interval::width).collect();

    let root = a.bounds().to_vec();
    if !feasible(&root)? {
        return Err(CertifyError::UnreachableUnsafeSet);
    }
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(Node { lb: lower(&root)?, seq, bounds: root });
    let mut upper = f64::INFINITY;
    let mut witness = None;
    let mut splits = 0usize;
    let level = loop {
        let Some(node) = heap.pop() else {
            if upper.is_finite() {
                break upper;
            }
            return Err(CertifyError::UnreachableUnsafeSet);
        };
        let center: Vec<f64> = node.bounds.iter().map(Interval::midpoint).collect();
        if sys.safety_margin(&center) <= 0.0 {
            let val = v.eval_unchecked(&center);
            if val < upper {
                upper = val;
                witness = Some(center);
            }
        }
        let tol = 1e-9 * upper.abs().max(1.0);
        if (upper.is_finite() && upper - node.lb <= tol) || splits >= MAX_SPLITS {
            break node.lb;
        }
        let (i, rel) = (0..node.bounds.len())
            .map(|i| (i, node.bounds[i].width() / widths[i]))
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
            .unwrap();
        if rel < 1e-12 {
            break node.lb;
        }
        splits += 1;
        let mid = node.bounds[i].midpoint();
        for half in [Interval { lo: node.bounds[i].lo, hi: mid }, Interval { lo: mid, hi: node.bounds[i].hi }] {
            let mut b = node.bounds.clone();
            b[i] = half;
            if feasible(&b)? {
                seq += 1;
                let lb = lower(&b)?.max(node.lb);
                heap.push(Node { lb, seq, bounds: b });
            }
        }
    };
    if !(level > 0.0) {
        return Err(CertifyError::NonPositiveLevel(level));
    }
    let h = &Polynomial::constant(vars, level) - &v;
    let note = format!("sub-level set V <= {level:e} of a Lyapunov candidate");
    let bc = BarrierCertificate::new(h, 1.0, note)?;
    Ok((bc, SublevelReport { level, witnessed: upper, witness, splits }))
}
