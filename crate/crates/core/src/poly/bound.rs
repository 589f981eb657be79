//! Range enclosures of polynomials over boxes.
//!
//! Two enclosures are computed and intersected: the natural interval
//! extension (monomial by monomial, with the even-power rule) and a centered
//! form, where the polynomial is re-expanded around the box midpoint with
//! interval coefficients. The centered form removes most of the dependency
//! effect for polynomials written in absolute coordinates far from the origin
//! (e.g. `(v - 0.48)^2` expanded). Recursive bisection refines the result;
//! every level is intersected with its parent so refinement is monotone.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use super::interval::Interval;
use super::{IntervalBox, PolyError, Polynomial};

impl Polynomial {
    /// Sound enclosure of the range over `bx` without subdivision.
    pub fn bound(&self, bx: &IntervalBox) -> Result<Interval, PolyError> {
        let iv = self.align_box(bx)?;
        Ok(self.enclose(&iv))
    }

    /// Sound enclosure refined by recursive bisection to `depth` levels.
    /// The result at depth `d + 1` is contained in the result at depth `d`.
    pub fn bound_refined(&self, bx: &IntervalBox, depth: u32) -> Result<Interval, PolyError> {
        let iv = self.align_box(bx)?;
        if depth == 0 || self.dependency_free() {
            return Ok(self.enclose(&iv));
        }
        let widths: Vec<f64> = iv.iter().map(Interval::width).collect();
        Ok(self.refine(&iv, &widths, depth))
    }

    /// Certified lower bound on the minimum over `bx` by best-first branch
    /// and bound. Stops when the bound reaches `target`, when a box center
    /// evaluates below `target`, or after `max_splits` splits. Returns the
    /// bound and the smallest value seen at a box center.
    pub fn min_bound(&self, bx: &IntervalBox, target: f64, max_splits: usize) -> Result<(f64, f64), PolyError> {
        let iv = self.align_box(bx)?;
        let widths: Vec<f64> = iv.iter().map(Interval::width).collect();
        let mut heap = BinaryHeap::new();
        let mut seq = 0usize;
        heap.push(Cell { lb: self.enclose(&iv).lo, seq, bounds: iv });
        let mut best = f64::INFINITY;
        let mut splits = 0usize;
        while let Some(cell) = heap.pop() {
            let center: Vec<f64> = cell.bounds.iter().map(Interval::midpoint).collect();
            best = best.min(self.eval_unchecked(&center));
            if cell.lb >= target || best < target || splits >= max_splits {
                return Ok((cell.lb, best));
            }
            let pick = (0..cell.bounds.len())
                .filter(|&i| self.uses_index(i) && widths[i] > 0.0 && cell.bounds[i].width() > 0.0)
                .map(|i| (i, cell.bounds[i].width() / widths[i]))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            let Some((i, _)) = pick else {
                return Ok((cell.lb, best));
            };
            splits += 1;
            let mid = cell.bounds[i].midpoint();
            for half in [Interval { lo: cell.bounds[i].lo, hi: mid }, Interval { lo: mid, hi: cell.bounds[i].hi }] {
                let mut b = cell.bounds.clone();
                b[i] = half;
                seq += 1;
                let lb = self.enclose(&b).lo.max(cell.lb);
                heap.push(Cell { lb, seq, bounds: b });
            }
        }
        Ok((f64::INFINITY, best))
    }

    /// Per-variable intervals in this polynomial's space. Variables that are
    /// not used may be absent from the box.
    fn align_box(&self, bx: &IntervalBox) -> Result<Vec<Interval>, PolyError> {
        self.vars
            .iter()
            .enumerate()
            .map(|(i, name)| match bx.get(name) {
                Some(b) => Ok(b),
                None if !self.uses_index(i) => Ok(Interval::point(0.0)),
                None => Err(PolyError::MissingVariable(name.clone())),
            })
            .collect()
    }

    /// True when every variable occurs in at most one monomial; the natural
    /// extension is then exact up to rounding and bisection cannot help.
    fn dependency_free(&self) -> bool {
        (0..self.vars.len()).all(|i| self.terms.keys().filter(|m| m.0[i] > 0).count() <= 1)
    }

    fn enclose(&self, iv: &[Interval]) -> Interval {
        let nat = self.natural(iv);
        if self.dependency_free() {
            return nat;
        }
        let cen = self.centered(iv);
        nat.intersect(&cen).unwrap_or(nat)
    }

    fn natural(&self, iv: &[Interval]) -> Interval {
        let mut acc: Option<Interval> = None;
        for (m, c) in &self.terms {
            let mut t: Option<Interval> = None;
            for (x, &e) in iv.iter().zip(&m.0) {
                if e == 0 {
                    continue;
                }
                let p = x.powi(e);
                t = Some(match t {
                    None => p,
                    Some(t) => t * p,
                });
            }
            let term = match t {
                None => Interval::point(*c),
                Some(t) if *c == 1.0 => t,
                Some(t) => t.scale(*c),
            };
            acc = Some(match acc {
                None => term,
                Some(a) => a + term,
            });
        }
        acc.unwrap_or(Interval::point(0.0))
    }

    /// Taylor-shift to the box midpoint with interval coefficients, then
    /// evaluate over the centered box.
    fn centered(&self, iv: &[Interval]) -> Interval {
        let centers: Vec<f64> = iv.iter().map(Interval::midpoint).collect();
        // radii[i] encloses [lo - c, hi - c], outward rounded
        let radii: Vec<Interval> = iv
            .iter()
            .zip(&centers)
            .map(|(x, c)| {
                let lo = (Interval::point(x.lo) - Interval::point(*c)).lo;
                let hi = (Interval::point(x.hi) - Interval::point(*c)).hi;
                Interval { lo: lo.min(0.0), hi: hi.max(0.0) }
            })
            .collect();

        let mut shifted: BTreeMap<Vec<u32>, Interval> = BTreeMap::new();
        let n = self.vars.len();
        for (m, c) in &self.terms {
            let exps = &m.0;
            // odometer over k_i in 0..=e_i
            let mut k = vec![0u32; n];
            loop {
                let mut coef = Interval::point(*c);
                for i in 0..n {
                    if exps[i] == 0 {
                        continue;
                    }
                    let b = binomial(exps[i], k[i]);
                    if b != 1.0 {
                        coef = coef.scale(b);
                    }
                    let rest = exps[i] - k[i];
                    if rest > 0 {
                        coef = coef * Interval::point(centers[i]).powi(rest);
                    }
                }
                shifted
                    .entry(k.clone())
                    .and_modify(|acc| *acc = *acc + coef)
                    .or_insert(coef);
                // advance
                let mut i = 0;
                while i < n {
                    if k[i] < exps[i] {
                        k[i] += 1;
                        break;
                    }
                    k[i] = 0;
                    i += 1;
                }
                if i == n {
                    break;
                }
            }
        }

        let mut acc: Option<Interval> = None;
        for (k, coef) in shifted {
            let mut t = coef;
            for (r, &e) in radii.iter().zip(&k) {
                if e > 0 {
                    t = t * r.powi(e);
                }
            }
            acc = Some(match acc {
                None => t,
                Some(a) => a + t,
            });
        }
        acc.unwrap_or(Interval::point(0.0))
    }

    fn refine(&self, iv: &[Interval], orig: &[f64], depth: u32) -> Interval {
        let here = self.enclose(iv);
        if depth == 0 {
            return here;
        }
        // split the used variable with the largest width relative to the
        // original box; ties resolve to the lowest index
        let mut best: Option<(usize, f64)> = None;
        for i in 0..iv.len() {
            if !self.uses_index(i) || orig[i] <= 0.0 || iv[i].width() <= 0.0 {
                continue;
            }
            let rel = iv[i].width() / orig[i];
            if best.map(|(_, b)| rel > b).unwrap_or(true) {
                best = Some((i, rel));
            }
        }
        let Some((i, _)) = best else {
            return here;
        };
        let mid = iv[i].midpoint();
        let mut left = iv.to_vec();
        let mut right = iv.to_vec();
        left[i] = Interval { lo: iv[i].lo, hi: mid };
        right[i] = Interval { lo: mid, hi: iv[i].hi };
        let a = self.refine(&left, orig, depth - 1);
        let b = self.refine(&right, orig, depth - 1);
        let hull = a.hull(&b);
        hull.intersect(&here).unwrap_or(here)
    }
}

struct Cell {
    lb: f64,
    seq: usize,
    bounds: Vec<Interval>,
}

impl PartialEq for Cell {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Cell {}

impl PartialOrd for Cell {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

// reversed so the max-heap pops the smallest lower bound first
impl Ord for Cell {
    fn cmp(&self, o: &Self) -> Ordering {
        o.lb.total_cmp(&self.lb).then(o.seq.cmp(&self.seq))
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    let mut r = 1.0f64;
    for j in 0..k {
        r = r * f64::from(n - j) / f64::from(j + 1);
    }
    r.round()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::vars;

    fn bx(names: &[&str], b: &[(f64, f64)]) -> IntervalBox {
        IntervalBox::new(vars(names), b.iter().map(|&(l, h)| Interval::new(l, h).unwrap()).collect())
            .unwrap()
    }

    #[test]
    fn square_uses_even_power_rule() {
        let x2 = Polynomial::from_terms(vars(&["x"]), [(vec![2], 1.0)]);
        let r = x2.bound(&bx(&["x"], &[(-1.0, 2.0)])).unwrap();
        assert_eq!(r, Interval { lo: 0.0, hi: 4.0 });
    }

    #[test]
    fn bilinear_product() {
        let xy = Polynomial::from_terms(vars(&["x", "y"]), [(vec![1, 1], 1.0)]);
        let r = xy.bound(&bx(&["x", "y"], &[(0.0, 1.0), (-1.0, 1.0)])).unwrap();
        assert_eq!(r, Interval { lo: -1.0, hi: 1.0 });
    }

    #[test]
    fn constant_is_exact() {
        let c = Polynomial::constant(vars(&["x"]), 5.0);
        assert_eq!(c.bound(&bx(&["x"], &[(-3.0, 7.0)])).unwrap(), Interval::point(5.0));
        assert_eq!(c.bound_refined(&bx(&["x"], &[(-3.0, 7.0)]), 6).unwrap(), Interval::point(5.0));
    }

    #[test]
    fn centered_form_handles_shifted_square() {
        // (v - 0.48)^2 expanded, over [0.44, 0.52]: true range [0, 0.0016]
        let s = vars(&["v"]);
        let v = Polynomial::var(s.clone(), "v").unwrap();
        let e = &v - &Polynomial::constant(s, 0.48);
        let sq = &e * &e;
        let r = sq.bound(&bx(&["v"], &[(0.44, 0.52)])).unwrap();
        assert!(r.lo <= 0.0 && r.hi >= 0.0016);
        assert!(r.lo > -1e-12 && r.hi < 0.0016 + 1e-12, "{r}");
    }

    #[test]
    fn missing_used_variable_is_an_error() {
        let x = Polynomial::var(vars(&["x", "y"]), "x").unwrap();
        assert!(x.bound(&bx(&["y"], &[(0.0, 1.0)])).is_err());
        // unused variables may be absent
        assert!(x.bound(&bx(&["x"], &[(0.0, 1.0)])).is_ok());
    }

    #[test]
    fn branch_and_bound_proves_positive_minimum() {
        // 7e^2 + 0.32 e q + 2.0736e-4 has minimum about 1.25e-4 on this box
        let s = vars(&["e", "q"]);
        let p = Polynomial::from_terms(s, [(vec![2, 0], 7.0), (vec![1, 1], 0.32), (vec![0, 0], 2.0736e-4)]);
        let b = bx(&["e", "q"], &[(-0.04, 0.04), (-0.15, 0.15)]);
        assert!(p.bound_refined(&b, 2).unwrap().lo < 0.0);
        let (lb, best) = p.min_bound(&b, 0.0, 100_000).unwrap();
        assert!(lb >= 0.0 && best >= lb, "{lb} {best}");
    }

    #[test]
    fn branch_and_bound_stops_on_negative_sample() {
        let x = Polynomial::var(vars(&["x"]), "x").unwrap();
        let (lb, best) = x.min_bound(&bx(&["x"], &[(-1.0, 1.0)]), 0.0, 1000).unwrap();
        assert!(lb <= -1.0 && best < 0.0);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), 6.0);
        assert_eq!(binomial(5, 0), 1.0);
        assert_eq!(binomial(5, 5), 1.0);
        assert_eq!(binomial(7, 3), 35.0);
    }
}
