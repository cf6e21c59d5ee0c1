//! Deterministic generator with configurable bias, used to check that the
//! metrics respond to a known amount of stereotyping.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{chat_completion_json, Backend, BackendError, Completion, GenerationParams};
use crate::experiment::{Attribute, ExperimentKind, OptionLetter, RolePair, TrialSpec};
use crate::report::ReferenceStats;

/// Probability of answering with the stereotyped role of `attribute` instead
/// of the correct one, for one role pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerBias {
    pub positive_role: String,
    pub negative_role: String,
    pub attribute: Attribute,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockProfile {
    /// Profession (case-insensitive) to probability of a female protagonist.
    pub stereotype_map: BTreeMap<String, f64>,
    pub default_female_probability: f64,
    pub answer_bias: Vec<AnswerBias>,
    /// Probability that each listed hobby comes from the pool stereotyped
    /// for the student's gender.
    pub hobby_bias: f64,
    /// Probability of a gender-neutral anecdote.
    pub neutral_probability: f64,
    /// Probability of an evasive answer naming neither role.
    pub refusal_probability: f64,
    /// Error rate on control (attribute-free) trials.
    pub control_error_rate: f64,
    pub rng_seed: u64,
}

impl Default for MockProfile {
    fn default() -> Self {
        Self {
            stereotype_map: BTreeMap::new(),
            default_female_probability: 0.5,
            answer_bias: Vec::new(),
            hobby_bias: 0.5,
            neutral_probability: 0.0,
            refusal_probability: 0.0,
            control_error_rate: 0.0,
            rng_seed: 0,
        }
    }
}

impl MockProfile {
    /// A profile that always answers coreference probes correctly.
    pub fn forced_correct(rng_seed: u64) -> Self {
        Self {
            rng_seed,
            ..Self::default()
        }
    }

    /// Female probability `strength` for professions whose reference share
    /// is above one half, `1 - strength` below it, 0.5 at exactly one half.
    pub fn from_reference(reference: &ReferenceStats, strength: f64, rng_seed: u64) -> Self {
        let stereotype_map = reference
            .fractions
            .iter()
            .map(|(p, &f)| {
                let prob = if f > 0.5 {
                    strength
                } else if f < 0.5 {
                    1.0 - strength
                } else {
                    0.5
                };
                (p.clone(), prob)
            })
            .collect();
        Self {
            stereotype_map,
            rng_seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let mut probs: Vec<(String, f64)> = vec![
            (
                "default_female_probability".into(),
                self.default_female_probability,
            ),
            ("hobby_bias".into(), self.hobby_bias),
            ("neutral_probability".into(), self.neutral_probability),
            ("refusal_probability".into(), self.refusal_probability),
            ("control_error_rate".into(), self.control_error_rate),
        ];
        probs.extend(
            self.stereotype_map
                .iter()
                .map(|(k, &v)| (format!("stereotype_map[{k}]"), v)),
        );
        probs.extend(self.answer_bias.iter().map(|b| {
            (
                format!(
                    "answer_bias[{}/{}, {}]",
                    b.positive_role, b.negative_role, b.attribute
                ),
                b.probability,
            )
        }));
        match probs.into_iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
            Some((name, p)) => Err(BackendError::Config(format!(
                "mock profile {name} = {p} is not a probability"
            ))),
            None => Ok(()),
        }
    }

    pub fn female_probability(&self, profession: &str) -> f64 {
        self.stereotype_map
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(profession))
            .map_or(self.default_female_probability, |(_, &p)| p)
    }

    pub fn answer_bias_for(&self, pair: &RolePair, attribute: Attribute) -> f64 {
        self.answer_bias
            .iter()
            .find(|b| {
                b.attribute == attribute
                    && b.positive_role.eq_ignore_ascii_case(&pair.positive)
                    && b.negative_role.eq_ignore_ascii_case(&pair.negative)
            })
            .map_or(0.0, |b| b.probability)
    }
}

const FEMALE_HOBBIES: &[&str] = &[
    "reading classic literature",
    "painting watercolors",
    "volunteering at the animal shelter",
    "ballet",
    "writing poetry",
    "playing the violin",
    "baking",
    "yoga",
    "fashion design",
    "gymnastics",
    "singing in the choir",
    "journaling",
];

const MALE_HOBBIES: &[&str] = &[
    "robotics",
    "coding",
    "chess",
    "basketball",
    "video games",
    "football",
    "astronomy",
    "building computers",
    "skateboarding",
    "fishing",
    "weightlifting",
    "rocketry",
];

const GENDERED_STORIES: &[&str] = &[
    "Every morning the {prof} arrived before anyone else. {Sub} checked every detail twice, and {pos} patience turned ordinary days into small victories for the people {sub} served.",
    "People in town knew the {prof} by {pos} laugh. When a hard week came, {sub} stayed late, fixed what was broken, and went home proud of {pos} quiet work.",
    "After twenty years as a {prof}, {sub} still loved the first hour of the day. Colleagues trusted {obj}, and {sub} never let {pos} standards slip.",
];

const NEUTRAL_STORIES: &[&str] = &[
    "The {prof} started the day early, checked the schedule twice, and finished every task with care. Colleagues said the work was always done right.",
    "A {prof} once spent a whole night solving one stubborn problem. By sunrise the solution worked, and the team celebrated with coffee.",
];

/// Deterministic mock. Every response depends only on the profile and on
/// the trial id (or the prompt when no trial is attached), so results are
/// identical across runs and parallelism settings.
pub struct MockBackend {
    profile: MockProfile,
}

impl MockBackend {
    pub fn new(profile: MockProfile) -> Result<Self, BackendError> {
        profile.validate()?;
        Ok(Self { profile })
    }

    pub fn profile(&self) -> &MockProfile {
        &self.profile
    }

    fn rng_for(&self, key: &str) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.profile.rng_seed.to_le_bytes());
        hasher.update(key.as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    fn respond(&self, spec: &TrialSpec, rng: &mut ChaCha8Rng) -> String {
        let p = &self.profile;
        match spec.experiment_kind {
            ExperimentKind::IndependenceOccupation => {
                let profession = spec.item_id.as_str();
                if rng.random_bool(p.neutral_probability) {
                    let story = NEUTRAL_STORIES.choose(rng).expect("non-empty");
                    return story.replace("{prof}", &profession.to_lowercase());
                }
                let female = rng.random_bool(p.female_probability(profession));
                let story = GENDERED_STORIES.choose(rng).expect("non-empty");
                fill_story(story, &profession.to_lowercase(), female)
            }
            ExperimentKind::IndependenceHobby => {
                let attribute = spec.attribute.unwrap_or(Attribute::Female);
                let (own, other) = match attribute {
                    Attribute::Female => (FEMALE_HOBBIES, MALE_HOBBIES),
                    Attribute::Male => (MALE_HOBBIES, FEMALE_HOBBIES),
                };
                let mut picked: Vec<&str> = Vec::with_capacity(4);
                while picked.len() < 4 {
                    let pool = if rng.random_bool(p.hobby_bias) {
                        own
                    } else {
                        other
                    };
                    let hobby = *pool.choose(rng).expect("non-empty");
                    if !picked.contains(&hobby) {
                        picked.push(hobby);
                    }
                }
                let name = spec.item_id.as_str();
                let subject = capitalize(attribute.pronoun());
                format!(
                    "{name} enjoys {}, {}, and {}. {subject} also likes {}.",
                    picked[0], picked[1], picked[2], picked[3]
                )
            }
            ExperimentKind::SepSufMedical | ExperimentKind::SepSufSector => {
                if spec.control {
                    return self.respond_control(spec, rng);
                }
                let (Some(pair), Some(attribute), Some(y)) =
                    (&spec.role_pair, spec.attribute, spec.ground_truth)
                else {
                    return "I am not sure who is right.".to_string();
                };
                if rng.random_bool(p.refusal_probability) {
                    return "Both of them could be right.".to_string();
                }
                let role = if rng.random_bool(p.answer_bias_for(pair, attribute)) {
                    pair.stereotyped_for(attribute)
                } else {
                    pair.role_for(y)
                };
                role_sentence(spec.experiment_kind, role)
            }
        }
    }

    fn respond_control(&self, spec: &TrialSpec, rng: &mut ChaCha8Rng) -> String {
        let wrong = rng.random_bool(self.profile.control_error_rate);
        if let Some(key) = &spec.answer_key {
            let letter = if wrong {
                OptionLetter::ALL
                    .into_iter()
                    .find(|l| l.as_str() != key)
                    .map_or("A", OptionLetter::as_str)
            } else {
                key.as_str()
            };
            return format!("The correct answer is {letter}.");
        }
        match (&spec.role_pair, spec.ground_truth) {
            (Some(pair), Some(y)) => {
                let label = if wrong { 1 - y } else { y };
                role_sentence(spec.experiment_kind, pair.role_for(label))
            }
            _ => "I am not sure.".to_string(),
        }
    }
}

fn role_sentence(kind: ExperimentKind, role: &str) -> String {
    match kind {
        ExperimentKind::SepSufMedical => format!("The {role} is right."),
        _ => format!("The {role}."),
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn fill_story(template: &str, profession: &str, female: bool) -> String {
    let (sub, obj, pos) = if female {
        ("she", "her", "her")
    } else {
        ("he", "him", "his")
    };
    template
        .replace("{prof}", profession)
        .replace("{Sub}", &capitalize(sub))
        .replace("{sub}", sub)
        .replace("{obj}", obj)
        .replace("{pos}", pos)
}

const MOCK_EPOCH: DateTime<Utc> = DateTime::UNIX_EPOCH;

impl Backend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(
        &self,
        prompt: &str,
        params: &GenerationParams,
        metadata: Option<&TrialSpec>,
    ) -> Result<Completion, BackendError> {
        if prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let key = metadata.map_or(prompt, |s| s.trial_id.as_str());
        let mut rng = self.rng_for(key);
        let text = match metadata {
            Some(spec) => self.respond(spec, &mut rng),
            None => "I cannot tell from the prompt alone.".to_string(),
        };
        let id = format!(
            "mock-{}",
            &hex::encode(Sha256::digest(key.as_bytes()))[..16]
        );
        Ok(Completion {
            raw: chat_completion_json(&id, &params.model_name, &text),
            text,
            backend_id: self.id().to_string(),
            latency_ms: 0,
            timestamp: MOCK_EPOCH,
        })
    }

    fn now(&self) -> DateTime<Utc> {
        MOCK_EPOCH
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::categorize::{
        extract_gender, extract_role_answer, GenderValue, NameTable, RoleAnswerValue,
    };
    use crate::data;
    use crate::experiment::{build_plan, PlanInputs, PlanOptions, Profession};

    fn nurse_plan(reps: u32) -> Vec<TrialSpec> {
        build_plan(
            &PlanInputs::Occupation(vec![Profession {
                profession: "Nurse".into(),
                reference_female_fraction: Some(0.87),
            }]),
            &PlanOptions::new(reps),
        )
        .unwrap()
        .specs
    }

    #[test]
    fn probability_one_is_always_female() {
        let profile = MockProfile {
            stereotype_map: BTreeMap::from([("Nurse".to_string(), 1.0)]),
            ..MockProfile::default()
        };
        let mock = MockBackend::new(profile).unwrap();
        let names = NameTable::default();
        for spec in nurse_plan(25) {
            let out = mock
                .complete(
                    &spec.render().unwrap(),
                    &GenerationParams::default(),
                    Some(&spec),
                )
                .unwrap();
            assert_eq!(extract_gender(&out.text, &names).value, GenderValue::Female);
        }
    }

    #[test]
    fn forced_correct_names_ground_truth_role() {
        let mock = MockBackend::new(MockProfile::forced_correct(3)).unwrap();
        let plan = build_plan(
            &PlanInputs::Sector(data::default_sector_prompts()),
            &PlanOptions::new(2),
        )
        .unwrap();
        for spec in &plan.specs {
            let out = mock
                .complete(
                    &spec.render().unwrap(),
                    &GenerationParams::default(),
                    Some(spec),
                )
                .unwrap();
            let pair = spec.role_pair.as_ref().unwrap();
            let answer = extract_role_answer(&out.text, pair);
            let expected = if spec.ground_truth == Some(1) {
                RoleAnswerValue::Positive
            } else {
                RoleAnswerValue::Negative
            };
            assert_eq!(answer.value, expected, "{}", out.text);
        }
    }

    #[test]
    fn deterministic_per_trial() {
        let profile = MockProfile {
            stereotype_map: BTreeMap::from([("nurse".to_string(), 0.5)]),
            rng_seed: 11,
            ..MockProfile::default()
        };
        let a = MockBackend::new(profile.clone()).unwrap();
        let b = MockBackend::new(profile).unwrap();
        let params = GenerationParams::default();
        for spec in nurse_plan(10) {
            let prompt = spec.render().unwrap();
            assert_eq!(
                a.complete(&prompt, &params, Some(&spec)).unwrap(),
                b.complete(&prompt, &params, Some(&spec)).unwrap()
            );
        }
    }

    #[test]
    fn rejects_invalid_probabilities() {
        let profile = MockProfile {
            hobby_bias: 1.5,
            ..MockProfile::default()
        };
        assert!(matches!(
            MockBackend::new(profile),
            Err(BackendError::Config(_))
        ));
    }

    #[test]
    fn stories_carry_consistent_pronouns() {
        for story in GENDERED_STORIES {
            let names = NameTable::default();
            let f = fill_story(story, "pilot", true);
            let m = fill_story(story, "pilot", false);
            assert_eq!(extract_gender(&f, &names).value, GenderValue::Female);
            assert_eq!(extract_gender(&m, &names).value, GenderValue::Male);
            assert_eq!(extract_gender(&f, &names).male_pronouns, 0);
            assert_eq!(extract_gender(&m, &names).female_pronouns, 0);
        }
        for story in NEUTRAL_STORIES {
            let s = story.replace("{prof}", "pilot");
            assert_eq!(
                extract_gender(&s, &NameTable::default()).value,
                GenderValue::Unresolved
            );
        }
    }
}
