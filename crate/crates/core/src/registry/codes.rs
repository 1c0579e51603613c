use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{PairingCode, CODE_SPACE};

use super::RegistryError;

pub const DEFAULT_MAX_ATTEMPTS: u32 = 100;

/// Source of raw code draws in `0..CODE_SPACE`.
pub trait CodeDraws: Send {
    fn next_draw(&mut self) -> u32;
}

/// Uniform draws from a seedable generator.
pub struct SeededDraws(ChaCha8Rng);

impl SeededDraws {
    pub fn new(seed: u64) -> Self {
        SeededDraws(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn from_entropy() -> Self {
        SeededDraws(ChaCha8Rng::from_os_rng())
    }
}

impl CodeDraws for SeededDraws {
    fn next_draw(&mut self) -> u32 {
        self.0.random_range(0..CODE_SPACE)
    }
}

/// Replays a fixed sequence of draws, cycling when exhausted.
pub struct ScriptedDraws {
    draws: Vec<u32>,
    next: usize,
}

impl ScriptedDraws {
    pub fn new(draws: Vec<u32>) -> Self {
        assert!(!draws.is_empty());
        assert!(draws.iter().all(|d| *d < CODE_SPACE));
        ScriptedDraws { draws, next: 0 }
    }
}

impl CodeDraws for ScriptedDraws {
    fn next_draw(&mut self) -> u32 {
        let d = self.draws[self.next % self.draws.len()];
        self.next += 1;
        d
    }
}

pub struct CodeGenerator {
    draws: Box<dyn CodeDraws>,
    max_attempts: u32,
}

impl CodeGenerator {
    pub fn new(draws: impl CodeDraws + 'static) -> Self {
        CodeGenerator {
            draws: Box::new(draws),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
        }
    }

    pub fn seeded(seed: u64) -> Self {
        Self::new(SeededDraws::new(seed))
    }

    pub fn with_max_attempts(mut self, max_attempts: u32) -> Self {
        assert!(max_attempts > 0);
        self.max_attempts = max_attempts;
        self
    }

    /// Draw codes uniformly, redrawing on collision with `active`, up to
    /// `max_attempts` draws in total.
    pub fn generate_code(
        &mut self,
        active: &HashSet<PairingCode>,
    ) -> Result<PairingCode, RegistryError> {
        for _ in 0..self.max_attempts {
            let code = PairingCode::from_index(self.draws.next_draw());
            if !active.contains(&code) {
                return Ok(code);
            }
        }
        Err(RegistryError::Exhausted {
            attempts: self.max_attempts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_padded() {
        let mut gen = CodeGenerator::new(ScriptedDraws::new(vec![7]));
        assert_eq!(gen.generate_code(&HashSet::new()).unwrap().as_str(), "00007");
    }

    #[test]
    fn redraws_on_collision() {
        let mut gen = CodeGenerator::new(ScriptedDraws::new(vec![42, 43]));
        let active: HashSet<_> = [PairingCode::from_index(42)].into();
        assert_eq!(gen.generate_code(&active).unwrap().as_str(), "00043");
    }

    #[test]
    fn full_space_is_exhausted() {
        let all: HashSet<_> = (0..CODE_SPACE).map(PairingCode::from_index).collect();
        let mut gen = CodeGenerator::seeded(1);
        assert_eq!(
            gen.generate_code(&all),
            Err(RegistryError::Exhausted { attempts: 100 })
        );
    }

    #[test]
    fn attempts_are_bounded() {
        let active: HashSet<_> = [PairingCode::from_index(5)].into();
        let mut gen = CodeGenerator::new(ScriptedDraws::new(vec![5])).with_max_attempts(3);
        assert_eq!(
            gen.generate_code(&active),
            Err(RegistryError::Exhausted { attempts: 3 })
        );
    }

    #[test]
    fn seeded_sequence_is_reproducible() {
        let active = HashSet::new();
        let run = |seed| {
            let mut gen = CodeGenerator::seeded(seed);
            (0..50)
                .map(|_| gen.generate_code(&active).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }
}
