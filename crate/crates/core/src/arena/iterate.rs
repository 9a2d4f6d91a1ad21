//! The iterative improvement loop: feed the generator its own latest output
//! and ask for something better, judged turn by turn, until K successive
//! failures or the turn budget.

use serde::{Deserialize, Serialize};

use crate::providers::{self, Provider, Winner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopConfig {
    /// Stop after this many consecutive judged failures.
    pub k_failures: u32,
    /// Hard turn budget; the loop always terminates within it.
    pub max_turns: u32,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            k_failures: 3,
            max_turns: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationResult {
    pub final_generation: String,
    /// Count of turns where the judge preferred the new output.
    pub n_success: u32,
    /// Total generator turns taken.
    pub turns: u32,
    /// True when the loop stopped early on a provider failure.
    pub provider_failed: bool,
}

/// Run the improvement loop starting from `seed_text`. Each turn renders
/// `improve_prompt` (with `{current}` substituted), generates a candidate,
/// and asks the judge whether the candidate beats the previous text; a turn
/// succeeds when the judge prefers the candidate (second position).
pub fn iterate_transsuasion(
    seed_text: &str,
    improve_prompt: &str,
    generator: &dyn Provider,
    judge: &dyn Provider,
    cfg: &LoopConfig,
) -> IterationResult {
    let mut current = seed_text.to_string();
    let mut n_success = 0u32;
    let mut turns = 0u32;
    let mut consecutive_failures = 0u32;

    while turns < cfg.max_turns {
        turns += 1;
        let prompt = improve_prompt.replace("{current}", &current);
        let candidate = match providers::generate_text(generator, &prompt) {
            Ok(text) => text,
            Err(_) => {
                return IterationResult {
                    final_generation: current,
                    n_success,
                    turns,
                    provider_failed: true,
                }
            }
        };
        let verdict = match providers::judge_pair(judge, "", &current, &candidate) {
            Ok(v) => v,
            Err(_) => {
                return IterationResult {
                    final_generation: current,
                    n_success,
                    turns,
                    provider_failed: true,
                }
            }
        };
        if verdict.winner == Winner::Second {
            n_success += 1;
            consecutive_failures = 0;
            current = candidate;
        } else {
            consecutive_failures += 1;
            if consecutive_failures >= cfg.k_failures {
                break;
            }
        }
    }

    IterationResult {
        final_generation: current,
        n_success,
        turns,
        provider_failed: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::{FailingProvider, MockGenerator, ScriptedJudge};
    use crate::providers::Role;

    fn run(verdicts: &[&str], k_failures: u32, max_turns: u32) -> IterationResult {
        let generator = MockGenerator::new(1);
        let judge = ScriptedJudge::new(verdicts.iter().map(|s| s.to_string())).with_fallback("A");
        iterate_transsuasion(
            "seed text",
            "improve: {current}",
            &generator,
            &judge,
            &LoopConfig {
                k_failures,
                max_turns,
            },
        )
    }

    #[test]
    fn always_rejecting_judge_gives_zero() {
        // fallback "A" = previous wins = failure
        let out = run(&[], 2, 10);
        assert_eq!(out.n_success, 0);
        assert_eq!(out.turns, 2);
        assert_eq!(out.final_generation, "seed text");
    }

    #[test]
    fn scripted_accept_accept_reject_reject() {
        let out = run(&["B", "B", "A", "A"], 2, 10);
        assert_eq!(out.n_success, 2);
        assert_eq!(out.turns, 4);
    }

    #[test]
    fn stops_at_first_failure_when_k_is_one() {
        let out = run(&["B", "A"], 1, 10);
        assert_eq!(out.n_success, 1);
        assert_eq!(out.turns, 2);
    }

    #[test]
    fn failure_streak_resets_on_success() {
        // F S F S F F with k=2 stops only at the trailing double failure
        let out = run(&["A", "B", "A", "B", "A", "A"], 2, 10);
        assert_eq!(out.n_success, 2);
        assert_eq!(out.turns, 6);
    }

    #[test]
    fn bounded_by_max_turns() {
        // judge always accepts: loop ends at the turn budget
        let judge = ScriptedJudge::new(Vec::<String>::new()).with_fallback("B");
        let generator = MockGenerator::new(2);
        let out = iterate_transsuasion(
            "seed",
            "improve: {current}",
            &generator,
            &judge,
            &LoopConfig {
                k_failures: 3,
                max_turns: 7,
            },
        );
        assert_eq!(out.turns, 7);
        assert_eq!(out.n_success, 7);
        assert!(!out.provider_failed);
    }

    #[test]
    fn generator_failure_returns_partial() {
        let generator = FailingProvider::new(Role::Generator);
        let judge = ScriptedJudge::new(Vec::<String>::new());
        let out = iterate_transsuasion(
            "seed",
            "improve: {current}",
            &generator,
            &judge,
            &LoopConfig::default(),
        );
        assert!(out.provider_failed);
        assert_eq!(out.final_generation, "seed");
        assert_eq!(out.n_success, 0);
    }

    #[test]
    fn successful_turn_advances_current() {
        let generator = MockGenerator::scripted(["better v1", "better v2"]);
        let judge = ScriptedJudge::new(["B", "B", "A", "A"]).with_fallback("A");
        let out = iterate_transsuasion(
            "seed",
            "improve: {current}",
            &generator,
            &judge,
            &LoopConfig {
                k_failures: 2,
                max_turns: 10,
            },
        );
        assert_eq!(out.final_generation, "better v2");
        assert_eq!(out.n_success, 2);
    }
}
