use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PRIMES: [u32; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Halton sequence with seeded digit permutations per dimension.
/// Zero stays fixed under every permutation so the radical inverse remains finite.
#[derive(Debug, Clone)]
pub struct ScrambledHalton {
    perms: Vec<Vec<u32>>,
    index: u64,
}

impl ScrambledHalton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1 && dim <= PRIMES.len(), "Halton dimension must be in 1..=10");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let perms = PRIMES[..dim]
            .iter()
            .map(|&b| {
                let mut tail: Vec<u32> = (1..b).collect();
                tail.shuffle(&mut rng);
                std::iter::once(0).chain(tail).collect()
            })
            .collect();
        Self { perms, index: 1 }
    }

    pub fn dim(&self) -> usize {
        self.perms.len()
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let i = self.index;
        self.index += 1;
        self.perms
            .iter()
            .zip(PRIMES)
            .map(|(perm, b)| {
                let (mut n, mut f, mut out) = (i, 1.0 / b as f64, 0.0);
                while n > 0 {
                    out += perm[(n % b as u64) as usize] as f64 * f;
                    n /= b as u64;
                    f /= b as f64;
                }
                out
            })
            .collect()
    }

    pub fn take_points(&mut self, count: usize) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.next_point()).collect()
    }
}
