use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sim::{generate_world, sample_start_goal, Difficulty, EpisodeSpec, Profile, WorldMap};

/// Generated worlds keyed by `(profile, seed)`, built on first use.
#[derive(Clone, Debug, Default)]
pub struct WorldCache {
    worlds: BTreeMap<(Profile, u64), Arc<WorldMap>>,
}

impl WorldCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, profile: Profile, seed: u64) -> Result<Arc<WorldMap>> {
        if let Some(w) = self.worlds.get(&(profile, seed)) {
            return Ok(Arc::clone(w));
        }
        let w = Arc::new(generate_world(seed, profile)?);
        self.worlds.insert((profile, seed), Arc::clone(&w));
        Ok(w)
    }

    pub fn insert(&mut self, world: Arc<WorldMap>, profile: Profile) {
        self.worlds.insert((profile, world.seed), world);
    }
}

/// `n` start/goal pairs spread over `world_seeds`, each with a geodesic
/// distance inside the difficulty's range. Deterministic in `seed`.
pub fn generate_episode_set(
    n: usize,
    difficulty: Difficulty,
    seed: u64,
    profile: Profile,
    world_seeds: &[u64],
) -> Result<Vec<EpisodeSpec>> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one episode"));
    }
    if world_seeds.is_empty() {
        return Err(Error::invalid("world_seeds", "need at least one world"));
    }
    let mut cache = WorldCache::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let ws = world_seeds[rng.random_range(0..world_seeds.len())];
        let world = cache.get(profile, ws)?;
        let (start, goal, d) = sample_start_goal(&world, difficulty.range(), &mut rng)?;
        out.push(EpisodeSpec {
            world_seed: ws,
            profile,
            start,
            goal,
            difficulty,
            optimal_length: d,
        });
    }
    Ok(out)
}
