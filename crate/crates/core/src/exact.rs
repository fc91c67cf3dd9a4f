//! Exhaustive enumeration for models with finitely many brood outcomes.
//!
//! These laws are exact (up to floating point) and serve as references for
//! the Monte-Carlo engines.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{bail, Error, Result};
use crate::models::{BroodOutcome, CountLaw, ModelKind, PointProcessModel};

fn key(x: f64) -> i64 {
    libm::round(x * (1u64 << 36) as f64) as i64
}

/// Brood outcomes `(probability, displacements)` of a finite kind, after the model's affine map.
pub fn brood_outcomes(model: &PointProcessModel) -> Result<Vec<BroodOutcome>> {
    let map = |x: f64| model.scale() * x + model.shift();
    match model.kind() {
        ModelKind::AtomicSizeBiased { law: CountLaw::Atoms(atoms) } => Ok(atoms
            .iter()
            .filter(|a| a.prob > 0.0)
            .map(|a| BroodOutcome {
                prob: a.prob,
                displacements: if a.count == 0 {
                    Vec::new()
                } else {
                    alloc::vec![map(0.5 * libm::log(a.count as f64)); a.count as usize]
                },
            })
            .collect()),
        ModelKind::Custom { outcomes } => Ok(outcomes
            .iter()
            .filter(|o| o.prob > 0.0)
            .map(|o| BroodOutcome { prob: o.prob, displacements: o.displacements.iter().map(|x| map(*x)).collect() })
            .collect()),
        _ => bail!(Precondition, "exact enumeration needs finitely many brood outcomes"),
    }
}

/// Atoms `(x, probability)` of the normalized increment law `F / m(1)`.
pub fn increment_atoms(model: &PointProcessModel) -> Result<Vec<(f64, f64)>> {
    let mut acc: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for o in brood_outcomes(model)? {
        for &x in &o.displacements {
            let e = acc.entry(key(x)).or_insert((x, 0.0));
            e.1 += o.prob * libm::exp(-x);
        }
    }
    let total: f64 = acc.values().map(|v| v.1).sum();
    if !(total > 0.0) {
        bail!(Precondition, "increment law is empty");
    }
    Ok(acc.into_values().map(|(x, w)| (x, w / total)).collect())
}

/// Law of `S_k` as merged atoms `(value, probability)`.
pub fn walk_sum_law(model: &PointProcessModel, k: usize) -> Result<Vec<(f64, f64)>> {
    let atoms = increment_atoms(model)?;
    let mut law: Vec<(f64, f64)> = alloc::vec![(0.0, 1.0)];
    for _ in 0..k {
        let mut next: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
        for &(s, p) in &law {
            for &(x, q) in &atoms {
                let e = next.entry(key(s + x)).or_insert((s + x, 0.0));
                e.1 += p * q;
            }
        }
        law = next.into_values().collect();
    }
    Ok(law)
}

/// `P(S_k > s)`.
pub fn walk_tail(model: &PointProcessModel, k: usize, s: f64) -> Result<f64> {
    Ok(walk_sum_law(model, k)?.iter().filter(|(v, _)| *v > s).map(|(_, p)| p).sum())
}

/// Atoms `(τ, S_τ, probability)` of a first-passage law.
pub type PassageLaw = Vec<(u64, f64, f64)>;

/// Joint law of `(τ, S_τ)` for `τ = inf{n : S_n > level}`, restricted to
/// `τ ≤ steps`, together with `P(τ > steps)`.
pub fn first_passage_law_upto(model: &PointProcessModel, level: f64, steps: u64) -> Result<(PassageLaw, f64)> {
    let atoms = increment_atoms(model)?;
    let mut alive: Vec<(f64, f64)> = alloc::vec![(0.0, 1.0)];
    let mut out = Vec::new();
    for step in 1..=steps {
        if alive.is_empty() {
            break;
        }
        let mut next: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
        let mut crossed: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
        for &(s, p) in &alive {
            for &(x, q) in &atoms {
                let y = s + x;
                let target = if y > level { &mut crossed } else { &mut next };
                let e = target.entry(key(y)).or_insert((y, 0.0));
                e.1 += p * q;
            }
        }
        out.extend(crossed.into_values().map(|(y, p)| (step, y, p)));
        alive = next.into_values().collect();
    }
    Ok((out, alive.iter().map(|(_, p)| p).sum()))
}

/// Joint law of `(τ, S_τ)`; fails if the walk can stay below `level` for `max_steps`.
pub fn first_passage_law(model: &PointProcessModel, level: f64, max_steps: u64) -> Result<PassageLaw> {
    let (law, rest) = first_passage_law_upto(model, level, max_steps)?;
    if rest > 0.0 {
        return Err(Error::Truncated { steps: max_steps, what: alloc::format!("exact first-passage law above {level}") });
    }
    Ok(law)
}

/// One realized generation: sorted positions with its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOutcome {
    pub positions: Vec<f64>,
    pub prob: f64,
}

fn merge_into(map: &mut BTreeMap<Vec<i64>, GenerationOutcome>, mut positions: Vec<f64>, prob: f64) {
    positions.sort_by(|a, b| a.total_cmp(b));
    let k: Vec<i64> = positions.iter().map(|x| key(*x)).collect();
    map.entry(k).or_insert(GenerationOutcome { positions, prob: 0.0 }).prob += prob;
}

/// Exact law of the generation-`n` point configuration (positions as a multiset).
pub fn enumerate_generation_law(model: &PointProcessModel, n: usize, max_states: usize) -> Result<Vec<GenerationOutcome>> {
    let outcomes = brood_outcomes(model)?;
    let mut law = alloc::vec![GenerationOutcome { positions: alloc::vec![0.0], prob: 1.0 }];
    for g in 0..n {
        let mut next: BTreeMap<Vec<i64>, GenerationOutcome> = BTreeMap::new();
        for state in &law {
            // Convolve the broods of the particles one at a time, merging partial multisets.
            let mut partial: BTreeMap<Vec<i64>, GenerationOutcome> = BTreeMap::new();
            merge_into(&mut partial, Vec::new(), state.prob);
            for &v in &state.positions {
                let mut grown: BTreeMap<Vec<i64>, GenerationOutcome> = BTreeMap::new();
                for part in partial.values() {
                    for o in &outcomes {
                        let mut pos = part.positions.clone();
                        pos.extend(o.displacements.iter().map(|x| v + x));
                        merge_into(&mut grown, pos, part.prob * o.prob);
                    }
                }
                if grown.len() > max_states {
                    bail!(Resource, "enumeration of generation {} exceeds {max_states} states", g + 1);
                }
                partial = grown;
            }
            for part in partial.into_values() {
                merge_into(&mut next, part.positions, part.prob);
            }
        }
        if next.len() > max_states {
            bail!(Resource, "enumeration of generation {} exceeds {max_states} states", g + 1);
        }
        law = next.into_values().collect();
    }
    Ok(law)
}

/// One realized stopping line.
#[derive(Debug, Clone, PartialEq)]
pub struct LineOutcome {
    /// `(generation, position)` of the entries inside the cutoff window.
    pub entries: Vec<(u32, f64)>,
    /// Crossing particles beyond `level + cutoff`.
    pub beyond: Vec<(u32, f64)>,
    /// Particles at `max_generation` still at or below `level`.
    pub open: Vec<(u32, f64)>,
    pub prob: f64,
}

type LineKey = (Vec<(u32, i64)>, Vec<(u32, i64)>, Vec<(u32, i64)>, Vec<(u32, i64)>);

/// Exact law of the coming generation above `level` (optionally with cutoff `T`).
///
/// Particles reaching `max_generation` without crossing are kept in `open`,
/// so entries up to generation `max_generation` are exact.
pub fn enumerate_line_law(
    model: &PointProcessModel,
    level: f64,
    cutoff: Option<f64>,
    max_generation: u32,
    max_states: usize,
) -> Result<Vec<LineOutcome>> {
    let outcomes = brood_outcomes(model)?;
    let upper = cutoff.map_or(f64::INFINITY, |t| level + t);
    #[derive(Clone)]
    struct State {
        entries: Vec<(u32, f64)>,
        beyond: Vec<(u32, f64)>,
        frontier: Vec<(u32, f64)>,
        open: Vec<(u32, f64)>,
        prob: f64,
    }
    fn canon(v: &mut [(u32, f64)]) -> Vec<(u32, i64)> {
        v.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        v.iter().map(|(g, x)| (*g, key(*x))).collect()
    }
    let mut states = alloc::vec![State { entries: Vec::new(), beyond: Vec::new(), frontier: alloc::vec![(0, 0.0)], open: Vec::new(), prob: 1.0 }];
    let mut done: BTreeMap<LineKey, LineOutcome> = BTreeMap::new();
    while !states.is_empty() {
        let mut next: BTreeMap<LineKey, State> = BTreeMap::new();
        for st in states {
            let mut rest = st.frontier.clone();
            let (g, v) = rest.pop().expect("nonempty frontier");
            for o in &outcomes {
                let mut s = State {
                    entries: st.entries.clone(),
                    beyond: st.beyond.clone(),
                    frontier: rest.clone(),
                    open: st.open.clone(),
                    prob: st.prob * o.prob,
                };
                for &x in &o.displacements {
                    let y = v + x;
                    if y <= level {
                        if g + 1 >= max_generation {
                            s.open.push((g + 1, y));
                        } else {
                            s.frontier.push((g + 1, y));
                        }
                    } else if y <= upper {
                        s.entries.push((g + 1, y));
                    } else {
                        s.beyond.push((g + 1, y));
                    }
                }
                let k = (canon(&mut s.entries), canon(&mut s.beyond), canon(&mut s.frontier), canon(&mut s.open));
                if s.frontier.is_empty() {
                    done.entry(k)
                        .or_insert(LineOutcome { entries: s.entries.clone(), beyond: s.beyond.clone(), open: s.open.clone(), prob: 0.0 })
                        .prob += s.prob;
                } else {
                    match next.get_mut(&k) {
                        Some(e) => e.prob += s.prob,
                        None => {
                            next.insert(k, s);
                        }
                    }
                }
            }
        }
        if next.len() > max_states || done.len() > max_states {
            bail!(Resource, "line enumeration exceeds {max_states} states");
        }
        states = next.into_values().collect();
    }
    Ok(done.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::LN_2;

    #[test]
    fn desk_generation_law() {
        let m = PointProcessModel::desk_atomic();
        let law = enumerate_generation_law(&m, 2, 10_000).unwrap();
        let total: f64 = law.iter().map(|o| o.prob).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let extinct: f64 = law.iter().filter(|o| o.positions.is_empty()).map(|o| o.prob).sum();
        assert!((extinct - 0.53125).abs() < 1e-15);
        for o in &law {
            assert_eq!(o.positions.len() % 4, 0);
            assert!(o.positions.iter().all(|x| (x - 2.0 * LN_2).abs() < 1e-14));
        }
    }

    #[test]
    fn walk_and_passage_laws() {
        let m = PointProcessModel::desk_atomic();
        let law = walk_sum_law(&m, 3).unwrap();
        assert_eq!(law.len(), 1);
        assert!((law[0].0 - 3.0 * LN_2).abs() < 1e-14 && (law[0].1 - 1.0).abs() < 1e-15);
        let fp = first_passage_law(&m, 1.0, 10).unwrap();
        assert_eq!(fp.len(), 1);
        assert_eq!(fp[0].0, 2);
    }

    #[test]
    fn line_law_on_desk_model() {
        let m = PointProcessModel::desk_atomic();
        let law = enumerate_line_law(&m, 1.0, None, 10, 10_000).unwrap();
        let total: f64 = law.iter().map(|o| o.prob).sum();
        assert!((total - 1.0).abs() < 1e-14);
        for o in &law {
            assert!(o.entries.iter().all(|(g, x)| *g == 2 && (x - 2.0 * LN_2).abs() < 1e-14));
        }
    }
}
