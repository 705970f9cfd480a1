//! Path reward: unigram overlap (ROUGE-1) between each agent's serialized
//! path and its best-matching reference, summed over both modalities.

use serde::{Deserialize, Serialize};

use crate::error::{CopathError, Result};
use crate::semgraph::tokenize;

/// Which ROUGE-1 statistic scores a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum RougeVariant {
    #[serde(rename = "f1")]
    #[default]
    F1,
    #[serde(rename = "recall")]
    Recall,
}

impl RougeVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            RougeVariant::F1 => "f1",
            RougeVariant::Recall => "recall",
        }
    }
}

impl std::str::FromStr for RougeVariant {
    type Err = CopathError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f1" => Ok(RougeVariant::F1),
            "recall" => Ok(RougeVariant::Recall),
            other => Err(CopathError::InvalidInput(format!(
                "unknown rouge variant '{other}' (expected f1 or recall)"
            ))),
        }
    }
}

/// Clipped unigram overlap count: each candidate token matches a reference
/// token at most as many times as it appears in the reference.
fn clipped_overlap(candidate: &[String], reference: &[String]) -> usize {
    let mut counts: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for token in reference {
        *counts.entry(token.as_str()).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for token in candidate {
        if let Some(count) = counts.get_mut(token.as_str()) {
            if *count > 0 {
                *count -= 1;
                overlap += 1;
            }
        }
    }
    overlap
}

/// ROUGE-1 between two raw strings. Both sides are lowercased and split on
/// whitespace/underscores. Empty candidate or reference scores 0; so does
/// zero overlap. F1 is computed as `2pr / (p + r)` exactly.
pub fn rouge1(candidate: &str, reference: &str, variant: RougeVariant) -> f64 {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        return 0.0;
    }
    let overlap = clipped_overlap(&cand, &refr) as f64;
    if overlap == 0.0 {
        return 0.0;
    }
    let precision = overlap / cand.len() as f64;
    let recall = overlap / refr.len() as f64;
    match variant {
        RougeVariant::F1 => 2.0 * precision * recall / (precision + recall),
        RougeVariant::Recall => recall,
    }
}

/// Reference descriptions for one episode: a list of ground-truth strings
/// per modality. An agent is scored against whichever of its references it
/// matches best.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub video: Vec<String>,
    pub context: Vec<String>,
}

/// Best ROUGE-1 of `candidate` over a reference list. No references, or no
/// overlap with any of them, scores 0.
pub fn best_rouge1(candidate: &str, references: &[String], variant: RougeVariant) -> f64 {
    references
        .iter()
        .map(|r| rouge1(candidate, r, variant))
        .fold(0.0, f64::max)
}

/// Episode reward: best-reference ROUGE-1 of the video path plus that of
/// the context path. Bounded in [0, 2]; a disabled side contributes 0
/// through its empty serialization.
pub fn compute_reward(
    path_v: &str,
    path_u: &str,
    reference: &Reference,
    variant: RougeVariant,
) -> f64 {
    best_rouge1(path_v, &reference.video, variant)
        + best_rouge1(path_u, &reference.context, variant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn overlap_of_three_over_lengths_three_and_four_is_four_sevenths() {
        // candidate "person open door" vs reference "person opens a door":
        // overlap 2 ("person", "door"), p = 2/3, r = 2/4,
        // f1 = 2·(2/3)·(1/2) / (2/3 + 1/2) = (2/3)/(7/6) = 4/7.
        let score = rouge1("person open door", "person opens a door", RougeVariant::F1);
        assert_abs_diff_eq!(score, 4.0 / 7.0, epsilon = 1e-15);
    }

    #[test]
    fn recall_variant_divides_by_reference_length() {
        let score = rouge1(
            "person open door",
            "person opens a door",
            RougeVariant::Recall,
        );
        assert_abs_diff_eq!(score, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn two_sided_reward_adds_per_side_scores() {
        // Video side scores 4/7 (above); context side "he did" vs
        // "did he open it": overlap 2, p = 1, r = 1/2, f1 = 2/3.
        // Total = 4/7 + 2/3 = 26/21.
        let reference = Reference {
            video: vec!["person opens a door".into()],
            context: vec!["did he open it".into()],
        };
        let reward = compute_reward("person open door", "he did", &reference, RougeVariant::F1);
        assert_abs_diff_eq!(reward, 26.0 / 21.0, epsilon = 1e-15);
    }

    #[test]
    fn clipping_counts_repeated_tokens_once_per_reference_occurrence() {
        // "dog dog dog" vs "dog": overlap clips to 1, p = 1/3, r = 1,
        // f1 = 2·(1/3)·1 / (4/3) = 1/2.
        let score = rouge1("dog dog dog", "dog", RougeVariant::F1);
        assert_abs_diff_eq!(score, 0.5, epsilon = 1e-15);
        // "dog dog" vs "dog dog dog": overlap 2, p = 1, r = 2/3, f1 = 4/5.
        let score = rouge1("dog dog", "dog dog dog", RougeVariant::F1);
        assert_abs_diff_eq!(score, 0.8, epsilon = 1e-15);
    }

    #[test]
    fn tokenization_is_case_and_underscore_insensitive() {
        assert_abs_diff_eq!(
            rouge1("Open_Door", "open door", RougeVariant::F1),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn empty_sides_score_zero() {
        assert_eq!(rouge1("", "person", RougeVariant::F1), 0.0);
        assert_eq!(rouge1("person", "", RougeVariant::F1), 0.0);
        assert_eq!(rouge1("", "", RougeVariant::F1), 0.0);
        assert_eq!(rouge1("cat", "dog", RougeVariant::F1), 0.0);
    }

    #[test]
    fn best_reference_is_selected_per_side() {
        let refs = vec!["cat sat".to_string(), "person open door".to_string()];
        // Second reference matches perfectly and must win.
        assert_abs_diff_eq!(
            best_rouge1("person open door", &refs, RougeVariant::F1),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(best_rouge1("person", &[], RougeVariant::F1), 0.0);
    }

    #[test]
    fn identical_strings_score_one() {
        assert_abs_diff_eq!(
            rouge1("a b c d", "a b c d", RougeVariant::F1),
            1.0,
            epsilon = 1e-15
        );
    }

    fn token_strategy() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            proptest::sample::select(vec!["a", "b", "c", "dog", "door", "open"]),
            0..8,
        )
        .prop_map(|tokens| tokens.join(" "))
    }

    proptest! {
        #[test]
        fn rouge_is_bounded_by_unit_interval(
            cand in token_strategy(),
            refr in token_strategy()
        ) {
            for variant in [RougeVariant::F1, RougeVariant::Recall] {
                let score = rouge1(&cand, &refr, variant);
                prop_assert!((0.0..=1.0).contains(&score));
            }
        }

        #[test]
        fn reward_is_bounded_by_two_and_zero_iff_no_overlap(
            pv in token_strategy(),
            pu in token_strategy(),
            rv in token_strategy(),
            ru in token_strategy()
        ) {
            let reference = Reference { video: vec![rv.clone()], context: vec![ru.clone()] };
            let reward = compute_reward(&pv, &pu, &reference, RougeVariant::F1);
            prop_assert!((0.0..=2.0).contains(&reward));
            let v_zero = rouge1(&pv, &rv, RougeVariant::F1) == 0.0;
            let u_zero = rouge1(&pu, &ru, RougeVariant::F1) == 0.0;
            prop_assert_eq!(reward == 0.0, v_zero && u_zero);
        }

        #[test]
        fn rouge_is_symmetric_in_f1(
            cand in token_strategy(),
            refr in token_strategy()
        ) {
            let ab = rouge1(&cand, &refr, RougeVariant::F1);
            let ba = rouge1(&refr, &cand, RougeVariant::F1);
            prop_assert!((ab - ba).abs() < 1e-15);
        }
    }
}
