//! Coming generations (first-passage stopping lines) and Nerman's martingale.

use alloc::vec::Vec;

use rand::RngCore;

use super::{tail, Population, NO_PARENT};
use crate::error::{bail, Error, Result};
use crate::models::PointProcessModel;

/// Resource limits for lazily grown lines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineCaps {
    /// Interior nodes plus entries.
    pub max_particles: usize,
    /// Children lighter than this are not sampled; their expected weight is booked instead.
    pub weight_floor: Option<f64>,
    pub max_generation: u32,
}

impl Default for LineCaps {
    fn default() -> Self {
        LineCaps { max_particles: 1 << 24, weight_floor: None, max_generation: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Node {
    parent: u32,
    child: u32,
    position: f64,
}

/// One particle of the line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineEntry {
    pub generation: u32,
    pub position: f64,
    /// Index of the parent among the line's interior nodes.
    pub node: u32,
    /// 1-based index among the siblings.
    pub child: u32,
    /// Index in the source population's generation (lines built from a population only).
    pub source: Option<u32>,
}

impl LineEntry {
    pub fn weight(&self) -> f64 {
        libm::exp(-self.position)
    }
}

/// The particles that first exceed `level` along their ancestral line,
/// optionally restricted to positions `≤ level + cutoff`.
///
/// Parts of the tree that were not sampled are booked at their conditional
/// expectation: `remainder` for crossings beyond the cutoff, `unresolved` for
/// window entries below the weight floor, `unfollowed` for interior mass whose
/// descendants were not explored, `ledger` for mass beyond the brood cap.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingLine {
    level: f64,
    cutoff: Option<f64>,
    nodes: Vec<Node>,
    entries: Vec<LineEntry>,
    remainder: f64,
    unresolved: f64,
    /// `unresolved` split by the generation of the children it stands for.
    unresolved_by_generation: Vec<f64>,
    unfollowed: f64,
    ledger: f64,
}

impl StoppingLine {
    fn empty(level: f64, cutoff: Option<f64>) -> Self {
        StoppingLine {
            level,
            cutoff,
            nodes: alloc::vec![Node { parent: NO_PARENT, child: 0, position: 0.0 }],
            entries: Vec::new(),
            remainder: 0.0,
            unresolved: 0.0,
            unresolved_by_generation: Vec::new(),
            unfollowed: 0.0,
            ledger: 0.0,
        }
    }

    fn upper(&self) -> f64 {
        self.cutoff.map_or(f64::INFINITY, |c| self.level + c)
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn cutoff(&self) -> Option<f64> {
        self.cutoff
    }

    pub fn entries(&self) -> &[LineEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of interior particles (root included).
    pub fn interior_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn remainder(&self) -> f64 {
        self.remainder
    }

    pub fn unresolved(&self) -> f64 {
        self.unresolved
    }

    pub fn unfollowed(&self) -> f64 {
        self.unfollowed
    }

    pub fn ledger(&self) -> f64 {
        self.ledger
    }

    /// Unresolved window mass attributed to generations above `m`.
    pub fn unresolved_after(&self, m: u32) -> f64 {
        self.unresolved_by_generation.iter().skip(m as usize + 1).sum()
    }

    /// `Y - Σ_{entries, |u| ≤ m} e^{-V_u}`: crossings beyond the cutoff plus late entries.
    pub fn remainder_beyond(&self, m: u32) -> f64 {
        self.remainder + (self.entry_weight() - self.weight_up_to_generation(m)) + self.unresolved_after(m)
    }

    /// Σ of entry weights (inside the cutoff window).
    pub fn entry_weight(&self) -> f64 {
        self.entries.iter().map(LineEntry::weight).sum()
    }

    /// Σ of entry weights with generation `≤ m`.
    pub fn weight_up_to_generation(&self, m: u32) -> f64 {
        self.entries.iter().filter(|e| e.generation <= m).map(LineEntry::weight).sum()
    }

    pub fn sum_entries(&self, f: impl Fn(&LineEntry) -> f64) -> f64 {
        self.entries.iter().map(f).sum()
    }

    /// `Y_t`: entry weights plus every booked conditional expectation except the cap ledger.
    pub fn nerman_y(&self) -> f64 {
        self.entry_weight() + self.remainder + self.unresolved + self.unfollowed
    }

    /// Ulam–Harris word of entry `i`.
    pub fn entry_label(&self, i: usize) -> Result<Vec<u32>> {
        let Some(e) = self.entries.get(i) else {
            bail!(State, "line has no entry {i}");
        };
        let mut word = alloc::vec![e.child];
        let mut n = e.node;
        while n != 0 {
            let node = &self.nodes[n as usize];
            word.push(node.child);
            n = node.parent;
        }
        word.reverse();
        Ok(word)
    }

    /// The line inside a materialized population.
    ///
    /// Interior particles of the deepest generation are booked as `unfollowed`.
    pub fn from_population(pop: &Population, level: f64, cutoff: Option<f64>) -> Result<Self> {
        if !(level >= 0.0) {
            bail!(Precondition, "line level must be nonnegative, got {level}");
        }
        let mut line = Self::empty(level, cutoff);
        let upper = line.upper();
        let depth = pop.depth();
        line.ledger = pop.ledger[depth];
        let mut node_of: Vec<u32> = alloc::vec![0];
        for g in 1..=depth {
            let gen = &pop.generations[g];
            let mut next = alloc::vec![u32::MAX; gen.len()];
            for (i, p) in gen.iter().enumerate() {
                let parent = node_of[p.parent as usize];
                if parent == u32::MAX {
                    continue;
                }
                if p.position > level {
                    if p.position <= upper {
                        line.entries.push(LineEntry {
                            generation: g as u32,
                            position: p.position,
                            node: parent,
                            child: p.child,
                            source: Some(i as u32),
                        });
                    } else {
                        line.remainder += p.weight();
                    }
                } else {
                    next[i] = line.nodes.len() as u32;
                    line.nodes.push(Node { parent, child: p.child, position: p.position });
                    if g == depth {
                        line.unfollowed += p.weight();
                    }
                }
            }
            node_of = next;
        }
        Ok(line)
    }
}

/// Grows the coming generation above `level` lazily, descending only through
/// particles at positions `≤ level`.
pub fn coming_generation<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    level: f64,
    cutoff: Option<f64>,
    rng: &mut R,
    caps: &LineCaps,
) -> Result<StoppingLine> {
    if !(level >= 0.0) {
        bail!(Precondition, "line level must be nonnegative, got {level}");
    }
    if let Some(c) = cutoff {
        if !(c >= 0.0) {
            bail!(Precondition, "line cutoff must be nonnegative, got {c}");
        }
    }
    let mut line = StoppingLine::empty(level, cutoff);
    let upper = line.upper();
    let cap = model.cap().unwrap_or(f64::INFINITY);
    let cap_tail = tail(model, cap);
    let mut generation: Vec<u32> = alloc::vec![0];
    let mut stack: Vec<u32> = alloc::vec![0];
    let mut buf = Vec::new();
    while let Some(ni) = stack.pop() {
        let node = line.nodes[ni as usize];
        let g = generation[ni as usize];
        if g >= caps.max_generation {
            return Err(Error::Truncated {
                steps: caps.max_generation as u64,
                what: alloc::format!("coming generation above {level}"),
            });
        }
        let w = libm::exp(-node.position);
        let into_line = level - node.position;
        let past_window = upper - node.position;
        let horizon = caps.weight_floor.map_or(f64::INFINITY, |f| libm::log(w / f));
        let limit = past_window.min(horizon);
        model.sample_brood_into(limit, rng, &mut buf)?;
        line.ledger += w * cap_tail;
        let sampled_to = limit.min(cap);
        let window_end = past_window.min(cap);
        if sampled_to < window_end {
            let lo = sampled_to.max(into_line);
            if lo < window_end {
                let mass = w * (tail(model, lo) - tail(model, window_end));
                line.unresolved += mass;
                let child = g as usize + 1;
                if line.unresolved_by_generation.len() <= child {
                    line.unresolved_by_generation.resize(child + 1, 0.0);
                }
                line.unresolved_by_generation[child] += mass;
            }
            if sampled_to < into_line {
                line.unfollowed += w * (tail(model, sampled_to) - tail(model, into_line.min(cap)));
            }
        }
        if past_window < cap {
            line.remainder += w * (tail(model, past_window) - cap_tail);
        }
        for (j, &x) in buf.iter().enumerate() {
            let y = node.position + x;
            if y > level {
                if y <= upper {
                    line.entries.push(LineEntry { generation: g + 1, position: y, node: ni, child: j as u32 + 1, source: None });
                } else {
                    line.remainder += libm::exp(-y);
                }
            } else {
                let id = line.nodes.len() as u32;
                line.nodes.push(Node { parent: ni, child: j as u32 + 1, position: y });
                generation.push(g + 1);
                stack.push(id);
            }
        }
        if line.nodes.len() + line.entries.len() > caps.max_particles {
            bail!(Resource, "coming generation above {level} exceeds {} particles", caps.max_particles);
        }
    }
    Ok(line)
}
