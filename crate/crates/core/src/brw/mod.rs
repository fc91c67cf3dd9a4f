//! Branching random walk populations, Biggins' martingale and lineage queries.

mod line;

pub use line::{coming_generation, LineCaps, LineEntry, StoppingLine};

use alloc::vec::Vec;
use core::ops::Range;

use rand::RngCore;

use crate::error::{bail, Result};
use crate::models::PointProcessModel;

/// Sentinel parent index of the root.
pub const NO_PARENT: u32 = u32::MAX;

/// A particle stored flyweight style: the full Ulam–Harris word is recovered
/// through the parent links of its [`Population`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    parent: u32,
    child: u32,
    first_child: u32,
    n_children: u32,
    position: f64,
    max_jump: f64,
    ancestor_max: f64,
}

impl Particle {
    fn root() -> Self {
        Particle {
            parent: NO_PARENT,
            child: 0,
            first_child: 0,
            n_children: 0,
            position: 0.0,
            max_jump: f64::NEG_INFINITY,
            ancestor_max: f64::NEG_INFINITY,
        }
    }

    pub fn position(&self) -> f64 {
        self.position
    }

    pub fn weight(&self) -> f64 {
        libm::exp(-self.position)
    }

    /// Index of the parent in the previous generation ([`NO_PARENT`] for the root).
    pub fn parent(&self) -> u32 {
        self.parent
    }

    /// 1-based index among the siblings (0 for the root).
    pub fn child_index(&self) -> u32 {
        self.child
    }

    /// Largest displacement along the ancestral line (`-∞` for the root).
    pub fn max_jump(&self) -> f64 {
        self.max_jump
    }

    /// Largest position among strict ancestors (`-∞` for the root).
    pub fn ancestor_max(&self) -> f64 {
        self.ancestor_max
    }

    /// Indices of the children in the next generation.
    pub fn children(&self) -> Range<usize> {
        self.first_child as usize..(self.first_child + self.n_children) as usize
    }

    pub fn is_ladder(&self) -> bool {
        self.position > self.ancestor_max
    }
}

/// Weight floor applied while growing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prune {
    /// Keep everything (requires a capped or finite model).
    None,
    /// Floor `f · W_k` at generation `k`.
    RelativeToW(f64),
    /// Fixed floor.
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthConfig {
    pub prune: Prune,
    /// Cap on the memory held by particles.
    pub max_bytes: usize,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        GrowthConfig { prune: Prune::RelativeToW(1e-12), max_bytes: 1 << 30 }
    }
}

impl GrowthConfig {
    pub fn with_prune(prune: Prune) -> Self {
        GrowthConfig { prune, ..Self::default() }
    }
}

/// A value together with the expected weight lost to truncation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measured {
    pub value: f64,
    pub ledger: f64,
}

/// Weight of generation-`n` particles above `t`, split by number of large jumps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JumpCensus {
    pub none: f64,
    pub one: f64,
    pub several: f64,
}

impl JumpCensus {
    pub fn total(&self) -> f64 {
        self.none + self.one + self.several
    }
}

/// Particles grouped by generation.
///
/// Children of one parent are stored contiguously, in parent order. The
/// ledger at generation `k` is the expected `e^{-V}`-weight that truncation
/// removed from generation `k` (caps, weight floors and pruning), so
/// `E[W_k] = m(1)^k - E[ledger_k]` for the uncapped model.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    generations: Vec<Vec<Particle>>,
    ledger: Vec<f64>,
    seed: Option<u64>,
}

fn tail(model: &PointProcessModel, x: f64) -> f64 {
    if x == f64::INFINITY {
        0.0
    } else {
        model.tail_f(x)
    }
}

/// Grows `n` generations from a single particle at 0.
pub fn grow_population<R: RngCore + ?Sized>(
    model: &PointProcessModel,
    n: usize,
    rng: &mut R,
    config: &GrowthConfig,
) -> Result<Population> {
    let mut pop = Population::new();
    for _ in 0..n {
        pop.extend(model, rng, config)?;
    }
    Ok(pop)
}

impl Default for Population {
    fn default() -> Self {
        Self::new()
    }
}

impl Population {
    /// The root alone.
    pub fn new() -> Self {
        Population { generations: alloc::vec![alloc::vec![Particle::root()]], ledger: alloc::vec![0.0], seed: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Index of the deepest materialized generation.
    pub fn depth(&self) -> usize {
        self.generations.len() - 1
    }

    pub fn particle_count(&self) -> usize {
        self.generations.iter().map(Vec::len).sum()
    }

    pub fn generation(&self, n: usize) -> Result<&[Particle]> {
        match self.generations.get(n) {
            Some(g) => Ok(g),
            None => bail!(State, "generation {n} not grown (depth {})", self.depth()),
        }
    }

    /// Cumulative truncation ledger at generation `n`.
    pub fn ledger(&self, n: usize) -> Result<f64> {
        self.generation(n)?;
        Ok(self.ledger[n])
    }

    /// Grows one more generation.
    pub fn extend<R: RngCore + ?Sized>(&mut self, model: &PointProcessModel, rng: &mut R, config: &GrowthConfig) -> Result<()> {
        let mass = model.laplace_m(1.0);
        self.extend_with(config, mass, None, |_, horizon, buf| model.sample_brood_into(horizon, &mut *rng, buf))
    }

    /// Grows one generation with a caller-supplied brood sampler.
    ///
    /// `brood(i, horizon, out)` fills `out` with the displacements of particle
    /// `i` and returns the expected per-unit weight it left out. Particle
    /// `protected` is never pruned; `mass` is `m(1)`, booked for pruned particles.
    pub(crate) fn extend_with(
        &mut self,
        config: &GrowthConfig,
        mass: f64,
        protected: Option<usize>,
        mut brood: impl FnMut(usize, f64, &mut Vec<f64>) -> Result<f64>,
    ) -> Result<()> {
        let k = self.depth();
        let w_k: f64 = self.generations[k].iter().map(Particle::weight).sum();
        let floor = match config.prune {
            Prune::None => 0.0,
            Prune::RelativeToW(f) => f * w_k,
            Prune::Absolute(w) => w,
        };
        let particle_bytes = core::mem::size_of::<Particle>();
        let mut bytes = self.particle_count() * particle_bytes;
        let mut lost = 0.0;
        let mut next: Vec<Particle> = Vec::new();
        let mut buf = Vec::new();
        let current = &mut self.generations[k];
        for (i, u) in current.iter_mut().enumerate() {
            let w = u.weight();
            u.first_child = next.len() as u32;
            u.n_children = 0;
            if w < floor && protected != Some(i) {
                lost += w * mass;
                continue;
            }
            let horizon = if floor > 0.0 { libm::log(w / floor) } else { f64::INFINITY };
            buf.clear();
            lost += w * brood(i, horizon, &mut buf)?;
            bytes += buf.len() * particle_bytes;
            if bytes > config.max_bytes {
                bail!(Resource, "generation {} exceeds the population cap of {} bytes", k + 1, config.max_bytes);
            }
            u.n_children = buf.len() as u32;
            let ancestor_max = u.ancestor_max.max(u.position);
            for (j, &x) in buf.iter().enumerate() {
                next.push(Particle {
                    parent: i as u32,
                    child: j as u32 + 1,
                    first_child: 0,
                    n_children: 0,
                    position: u.position + x,
                    max_jump: u.max_jump.max(x),
                    ancestor_max,
                });
            }
        }
        self.generations.push(next);
        let prev = self.ledger[k];
        self.ledger.push(prev + lost);
        Ok(())
    }

    /// Ulam–Harris word of particle `i` in generation `n`.
    pub fn label(&self, n: usize, i: usize) -> Result<Vec<u32>> {
        let gen = self.generation(n)?;
        if i >= gen.len() {
            bail!(State, "particle {i} not present in generation {n}");
        }
        let mut word = Vec::with_capacity(n);
        let mut idx = i;
        for g in (1..=n).rev() {
            let p = &self.generations[g][idx];
            word.push(p.child);
            idx = p.parent as usize;
        }
        word.reverse();
        Ok(word)
    }

    /// Displacement of particle `i` in generation `n` from its parent.
    fn jump(&self, n: usize, i: usize) -> f64 {
        let p = &self.generations[n][i];
        p.position - self.generations[n - 1][p.parent as usize].position
    }

    /// Number of ancestral displacements strictly above `h`.
    pub fn big_jump_count(&self, n: usize, i: usize, h: f64) -> Result<usize> {
        let gen = self.generation(n)?;
        if i >= gen.len() {
            bail!(State, "particle {i} not present in generation {n}");
        }
        if !(gen[i].max_jump > h) {
            return Ok(0);
        }
        let mut count = 0;
        let mut idx = i;
        for g in (1..=n).rev() {
            if self.jump(g, idx) > h {
                count += 1;
            }
            idx = self.generations[g][idx].parent as usize;
        }
        Ok(count)
    }

    /// `W_n = Σ_{|u|=n} e^{-V_u}`.
    pub fn biggins_w(&self, n: usize) -> Result<Measured> {
        let value = self.generation(n)?.iter().map(Particle::weight).sum();
        Ok(Measured { value, ledger: self.ledger[n] })
    }

    /// `Z̄_n(t) = Σ_{|u|=n, V_u > t} e^{-V_u}`.
    pub fn z_tail(&self, n: usize, t: f64) -> Result<f64> {
        Ok(self.generation(n)?.iter().filter(|p| p.position > t).map(Particle::weight).sum())
    }

    /// Splits `Z̄_n(t)` by the number of ancestral jumps above `h`.
    pub fn big_jump_census(&self, n: usize, t: f64, h: f64) -> Result<JumpCensus> {
        let mut census = JumpCensus::default();
        for (i, p) in self.generation(n)?.iter().enumerate() {
            if p.position > t {
                let w = p.weight();
                match self.big_jump_count(n, i, h)? {
                    0 => census.none += w,
                    1 => census.one += w,
                    _ => census.several += w,
                }
            }
        }
        Ok(census)
    }

    /// Indices of the generation-`n` descendants of particle `i` at generation `k`.
    pub fn descendants(&self, k: usize, i: usize, n: usize) -> Result<Range<usize>> {
        self.generation(n)?;
        let gen = self.generation(k)?;
        if i >= gen.len() {
            bail!(State, "particle {i} not present in generation {k}");
        }
        if n < k {
            bail!(State, "generation {n} precedes {k}");
        }
        let mut range = i..i + 1;
        for g in k..n {
            let gen = &self.generations[g];
            range = if range.is_empty() {
                0..0
            } else {
                let first = gen[range.start].first_child as usize;
                let last = gen[range.end - 1].children().end;
                first..last.max(first)
            };
        }
        Ok(range)
    }

    /// Weight of generation-`n` descendants of `(k, i)` with position above `x`.
    pub fn subtree_tail(&self, k: usize, i: usize, n: usize, x: f64) -> Result<f64> {
        let range = self.descendants(k, i, n)?;
        Ok(self.generations[n][range].iter().filter(|p| p.position > x).map(Particle::weight).sum())
    }

    /// The embedded walk of strictly ascending ladder particles.
    ///
    /// The parent of a ladder particle in the embedding is its closest ladder
    /// ancestor; embedded generations count ladder ancestors.
    pub fn ladder_embedding(&self) -> Population {
        // (embedded generation, original index) of the closest ladder ancestor-or-self.
        let mut anchor: Vec<(u32, u32)> = alloc::vec![(0, 0)];
        struct Pending {
            parent: u32,
            position: f64,
        }
        let mut buckets: Vec<Vec<Pending>> = alloc::vec![Vec::new()];
        buckets[0].push(Pending { parent: NO_PARENT, position: 0.0 });
        for g in 1..self.generations.len() {
            let mut next_anchor = Vec::with_capacity(self.generations[g].len());
            for p in &self.generations[g] {
                let (eg, eidx) = anchor[p.parent as usize];
                if p.is_ladder() {
                    let level = eg as usize + 1;
                    if buckets.len() <= level {
                        buckets.push(Vec::new());
                    }
                    let me = buckets[level].len() as u32;
                    buckets[level].push(Pending { parent: eidx, position: p.position });
                    next_anchor.push((level as u32, me));
                } else {
                    next_anchor.push((eg, eidx));
                }
            }
            anchor = next_anchor;
        }
        // Order each embedded generation by parent so that broods are contiguous.
        let mut generations: Vec<Vec<Particle>> = Vec::with_capacity(buckets.len());
        let mut remap_prev: Vec<u32> = alloc::vec![0];
        for (level, bucket) in buckets.into_iter().enumerate() {
            let mut order: Vec<usize> = (0..bucket.len()).collect();
            if level > 0 {
                order.sort_by_key(|&j| remap_prev[bucket[j].parent as usize]);
            }
            let mut remap = alloc::vec![0u32; bucket.len()];
            let mut gen = Vec::with_capacity(bucket.len());
            for (new, &j) in order.iter().enumerate() {
                remap[j] = new as u32;
                let b = &bucket[j];
                if level == 0 {
                    gen.push(Particle::root());
                } else {
                    let parent = remap_prev[b.parent as usize];
                    let prev: &mut Vec<Particle> = &mut generations[level - 1];
                    let pp = &mut prev[parent as usize];
                    if pp.n_children == 0 {
                        pp.first_child = new as u32;
                    }
                    pp.n_children += 1;
                    let x = b.position - pp.position;
                    gen.push(Particle {
                        parent,
                        child: pp.n_children,
                        first_child: 0,
                        n_children: 0,
                        position: b.position,
                        max_jump: pp.max_jump.max(x),
                        ancestor_max: pp.position,
                    });
                }
            }
            generations.push(gen);
            remap_prev = remap;
        }
        let total = *self.ledger.last().unwrap_or(&0.0);
        let depth = generations.len();
        Population { generations, ledger: alloc::vec![total; depth], seed: self.seed }
    }
}
