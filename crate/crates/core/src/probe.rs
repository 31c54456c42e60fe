//! Probe construction: personas, the prompt templates and probe plans.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// System prompt with the `{traits}` placeholder. Rendered by
/// [`render_prompts`]; with no traits the placeholder and its trailing space
/// are removed.
pub const SYSTEM_TEMPLATE: &str = "You are a personal assistant helping a {traits} news reader.
Your task is to fetch the 10 latest online news articles with their URLs.
Only include articles written in English.
Always respond with a bullet list where each item is:
- The article's title, followed by its full URL in parentheses.
Do not include any additional text or commentary.";

pub const USER_TEMPLATE: &str = "Give me the latest online news about {topic}.";

/// Default topic list (canonical Wikipedia-style titles).
pub const DEFAULT_TOPICS: [&str; 24] = [
    "Russian invasion of Ukraine",
    "Gaza war",
    "Romanian Presidential Election",
    "Poland Presidential Election",
    "Red Sea crisis",
    "US tariffs",
    "Conclave",
    "German AfD ruled extremist",
    "Climate change",
    "Freedom of the press (US)",
    "South-west US measles outbreak",
    "India\u{2013}Pakistan border skirmishes",
    "Iran\u{2013}United States relations",
    "M23 campaign",
    "US immigration policy",
    "Abortion policy",
    "Gender identity",
    "Gun control policy",
    "Marijuana legalization",
    "Same-sex marriage",
    "LGBTQ rights",
    "Inflation",
    "Sea-level rise",
    "Persecution of Uyghurs in China",
];

macro_rules! binary_trait {
    ($name:ident { $first:ident => $first_word:literal, $second:ident => $second_word:literal }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $first,
            $second,
        }

        impl $name {
            pub const ALL: [$name; 2] = [$name::$first, $name::$second];

            pub fn word(self) -> &'static str {
                match self {
                    $name::$first => $first_word,
                    $name::$second => $second_word,
                }
            }

            fn from_word(word: &str) -> Option<Self> {
                match word {
                    $first_word => Some($name::$first),
                    $second_word => Some($name::$second),
                    _ => None,
                }
            }
        }
    };
}

binary_trait!(Wealth { Poor => "poor", Rich => "rich" });
binary_trait!(Sex { Male => "male", Female => "female" });
binary_trait!(Age { Young => "young", Old => "old" });
binary_trait!(Ideology { Left => "left", Right => "right" });

/// Optional sociodemographic descriptors of the simulated news reader.
///
/// Ordering is lexicographic over (wealth, sex, age, ideology) with absent
/// attributes first, which is also the order of [`persona_grid`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Persona {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wealth: Option<Wealth>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<Sex>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<Age>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideology: Option<Ideology>,
}

impl Persona {
    /// The default condition: no traits at all.
    pub const BASELINE: Persona = Persona {
        wealth: None,
        sex: None,
        age: None,
        ideology: None,
    };

    pub fn is_baseline(&self) -> bool {
        *self == Self::BASELINE
    }

    /// Space-joined trait words in the fixed order wealth, sex, age, ideology.
    pub fn traits(&self) -> String {
        let words = [
            self.wealth.map(Wealth::word),
            self.sex.map(Sex::word),
            self.age.map(Age::word),
            self.ideology.map(Ideology::word),
        ];
        let mut out = String::new();
        for word in words.into_iter().flatten() {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(word);
        }
        out
    }

    /// Inverse of [`Persona::traits`]. Words may come in any order but each
    /// attribute at most once.
    pub fn parse_traits(traits: &str) -> Result<Persona> {
        let mut persona = Persona::default();
        for word in traits.split_whitespace() {
            let word_lc = word.to_ascii_lowercase();
            let w = word_lc.as_str();
            let slot_taken = if let Some(v) = Wealth::from_word(w) {
                persona.wealth.replace(v).is_some()
            } else if let Some(v) = Sex::from_word(w) {
                persona.sex.replace(v).is_some()
            } else if let Some(v) = Age::from_word(w) {
                persona.age.replace(v).is_some()
            } else if let Some(v) = Ideology::from_word(w) {
                persona.ideology.replace(v).is_some()
            } else {
                return Err(invalid!("unknown persona trait {word:?}"));
            };
            if slot_taken {
                return Err(invalid!("persona trait {word:?} repeats an attribute"));
            }
        }
        Ok(persona)
    }
}

impl fmt::Display for Persona {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_baseline() {
            f.write_str("baseline")
        } else {
            f.write_str(&self.traits())
        }
    }
}

/// The sixteen full trait combinations, lexicographic in declaration order
/// (`poor male young left` first).
pub fn persona_grid() -> Vec<Persona> {
    let mut grid = Vec::with_capacity(16);
    for wealth in Wealth::ALL {
        for sex in Sex::ALL {
            for age in Age::ALL {
                for ideology in Ideology::ALL {
                    grid.push(Persona {
                        wealth: Some(wealth),
                        sex: Some(sex),
                        age: Some(age),
                        ideology: Some(ideology),
                    });
                }
            }
        }
    }
    grid
}

/// Renders the (system, user) prompt pair for a topic and persona.
pub fn render_prompts(topic: &str, persona: &Persona) -> Result<(String, String)> {
    if topic.trim().is_empty() {
        return Err(invalid!("topic must be non-empty"));
    }
    let traits = persona.traits();
    let system = if traits.is_empty() {
        SYSTEM_TEMPLATE.replacen("{traits} ", "", 1)
    } else {
        SYSTEM_TEMPLATE.replacen("{traits}", &traits, 1)
    };
    let user = USER_TEMPLATE.replacen("{topic}", topic, 1);
    Ok((system, user))
}

/// Identity of one query: which engine, topic, persona and day.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProbeKey {
    pub engine: String,
    pub topic: String,
    /// Trait string of the persona; empty for the baseline condition.
    #[serde(with = "persona_as_traits")]
    pub persona: Persona,
    pub day: NaiveDate,
}

impl fmt::Display for ProbeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}/{}", self.engine, self.topic, self.persona, self.day)
    }
}

mod persona_as_traits {
    use super::Persona;
    use alloc::string::String;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Persona, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&p.traits())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Persona, D::Error> {
        let raw = String::deserialize(d)?;
        Persona::parse_traits(&raw).map_err(D::Error::custom)
    }
}

/// A probe with its rendered prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeSpec {
    pub key: ProbeKey,
    pub system_prompt: String,
    pub user_prompt: String,
}

impl ProbeSpec {
    pub fn new(engine: &str, topic: &str, persona: Persona, day: NaiveDate) -> Result<Self> {
        let (system_prompt, user_prompt) = render_prompts(topic, &persona)?;
        Ok(ProbeSpec {
            key: ProbeKey {
                engine: engine.to_string(),
                topic: topic.to_string(),
                persona,
                day,
            },
            system_prompt,
            user_prompt,
        })
    }

    pub fn from_key(key: ProbeKey) -> Result<Self> {
        let (system_prompt, user_prompt) = render_prompts(&key.topic, &key.persona)?;
        Ok(ProbeSpec {
            key,
            system_prompt,
            user_prompt,
        })
    }
}

/// Builds the full probe plan: days in order, topics in configured order
/// within a day, then personas, then engines. Topics stay contiguous so a
/// runner can fan out across engines within a topic.
pub fn build_plan(
    engines: &[String],
    topics: &[String],
    personas: &[Persona],
    days: &[NaiveDate],
) -> Result<Vec<ProbeSpec>> {
    let mut plan = Vec::with_capacity(engines.len() * topics.len() * personas.len() * days.len());
    for &day in days {
        for topic in topics {
            for persona in personas {
                for engine in engines {
                    plan.push(ProbeSpec::new(engine, topic, *persona, day)?);
                }
            }
        }
    }
    Ok(plan)
}

/// One verbatim agent response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawAnswer {
    #[serde(flatten)]
    pub key: ProbeKey,
    /// RFC 3339 timestamp of the response.
    pub fetched_at: String,
    pub text: String,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

/// A probe that produced no answer after all retries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeFailure {
    #[serde(flatten)]
    pub key: ProbeKey,
    pub error: String,
    pub attempts: u32,
    #[serde(default)]
    pub retryable: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    const VERBATIM_NO_TRAITS: &str = "You are a personal assistant helping a news reader.
Your task is to fetch the 10 latest online news articles with their URLs.
Only include articles written in English.
Always respond with a bullet list where each item is:
- The article's title, followed by its full URL in parentheses.
Do not include any additional text or commentary.";

    #[test]
    fn user_prompt_template() {
        let (_, user) = render_prompts("Gaza war", &Persona::BASELINE).unwrap();
        assert_eq!(user, "Give me the latest online news about Gaza war.");
    }

    #[test]
    fn empty_traits_collapse() {
        let (system, _) = render_prompts("X", &Persona::BASELINE).unwrap();
        assert_eq!(system, VERBATIM_NO_TRAITS);
        assert!(!system.contains('{'));
        assert!(!system.contains("  "));
    }

    #[test]
    fn single_trait() {
        let persona = Persona {
            ideology: Some(Ideology::Right),
            ..Persona::default()
        };
        let (system, _) = render_prompts("Inflation", &persona).unwrap();
        assert!(system.starts_with("You are a personal assistant helping a right news reader.\n"));
    }

    #[test]
    fn full_traits_in_fixed_order() {
        let persona = Persona {
            ideology: Some(Ideology::Left),
            age: Some(Age::Old),
            sex: Some(Sex::Female),
            wealth: Some(Wealth::Rich),
        };
        assert_eq!(persona.traits(), "rich female old left");
        let (system, _) = render_prompts("Conclave", &persona).unwrap();
        assert_eq!(
            system.lines().next().unwrap(),
            "You are a personal assistant helping a rich female old left news reader."
        );
    }

    #[test]
    fn empty_topic_rejected() {
        assert!(render_prompts("  ", &Persona::BASELINE).is_err());
    }

    #[test]
    fn grid_shape() {
        let grid = persona_grid();
        assert_eq!(grid.len(), 16);
        assert_eq!(grid[0].traits(), "poor male young left");
        assert_eq!(grid[15].traits(), "rich female old right");
        let set: alloc::collections::BTreeSet<_> = grid.iter().collect();
        assert_eq!(set.len(), 16);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert!(grid.iter().all(|p| !p.is_baseline()));
    }

    #[test]
    fn traits_round_trip() {
        for p in persona_grid().into_iter().chain([Persona::BASELINE]) {
            assert_eq!(Persona::parse_traits(&p.traits()).unwrap(), p);
        }
        assert!(Persona::parse_traits("poor rich").is_err());
        assert!(Persona::parse_traits("centrist").is_err());
    }

    #[test]
    fn plan_counts() {
        let engines: Vec<String> = ["gpt", "claude", "gemini"].iter().map(|s| s.to_string()).collect();
        let topics: Vec<String> = DEFAULT_TOPICS.iter().map(|s| s.to_string()).collect();
        let start = NaiveDate::from_ymd_opt(2025, 5, 15).unwrap();
        let days: Vec<NaiveDate> = (0..7).map(|d| start + chrono::Days::new(d)).collect();
        let plan = build_plan(&engines, &topics, &[Persona::BASELINE], &days).unwrap();
        assert_eq!(plan.len(), 504);
        let baseline = build_plan(&["google_news".to_string()], &topics, &[Persona::BASELINE], &days).unwrap();
        assert_eq!(baseline.len(), 168);
        // topics contiguous within a day
        assert_eq!(plan[0].key.topic, plan[2].key.topic);
        assert_ne!(plan[2].key.topic, plan[3].key.topic);
    }

    #[test]
    fn raw_answer_json_shape() {
        let answer = RawAnswer {
            key: ProbeKey {
                engine: "gpt".into(),
                topic: "Gaza war".into(),
                persona: Persona::BASELINE,
                day: NaiveDate::from_ymd_opt(2025, 5, 15).unwrap(),
            },
            fetched_at: "2025-05-15T20:00:00Z".into(),
            text: "- a (https://bbc.com/x)".into(),
            meta: BTreeMap::new(),
        };
        let json = serde_json::to_string(&answer).unwrap();
        assert_eq!(
            json,
            r#"{"engine":"gpt","topic":"Gaza war","persona":"","day":"2025-05-15","fetched_at":"2025-05-15T20:00:00Z","text":"- a (https://bbc.com/x)","meta":{}}"#
        );
        let back: RawAnswer = serde_json::from_str(&json).unwrap();
        assert_eq!(back, answer);
    }
}
