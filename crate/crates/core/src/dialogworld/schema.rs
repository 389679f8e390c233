//! World schemas and their text format.
//!
//! Grammar (one directive per line, `#` starts a comment, tokens split on
//! whitespace):
//!
//! ```text
//! world v1
//! domain <name>
//! informable <slot>: <value> <value> ...
//! requestable <slot> <slot> ...
//! entity <name> <slot>=<value> ...
//! ```
//!
//! `informable`, `requestable` and `entity` lines belong to the most recent
//! `domain`. Every entity must assign a value to every informable slot (from
//! that slot's value list) and to every requestable slot (free-form token).

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const WORLD_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InformableSlot {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub name: String,
    /// Value index per informable slot.
    pub informable: Vec<usize>,
    /// Value per requestable slot.
    pub requestable: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainSchema {
    pub name: String,
    pub informable: Vec<InformableSlot>,
    pub requestable: Vec<String>,
    pub entities: Vec<Entity>,
}

impl DomainSchema {
    /// Informable slots first, then requestable slots.
    pub fn num_slots(&self) -> usize {
        self.informable.len() + self.requestable.len()
    }

    pub fn slot_name(&self, slot: usize) -> &str {
        if slot < self.informable.len() {
            &self.informable[slot].name
        } else {
            &self.requestable[slot - self.informable.len()]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldSchema {
    pub domains: Vec<DomainSchema>,
}

/// Knobs for [`WorldSchema::generate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldGenConfig {
    pub domains: Vec<String>,
    pub informable_per_domain: usize,
    pub requestable_per_domain: usize,
    pub values_per_slot: usize,
    pub entities_per_domain: usize,
}

impl Default for WorldGenConfig {
    fn default() -> Self {
        WorldGenConfig {
            domains: vec!["hotel".into(), "restaurant".into(), "attraction".into()],
            informable_per_domain: 3,
            requestable_per_domain: 3,
            values_per_slot: 3,
            entities_per_domain: 8,
        }
    }
}

const INFORMABLE_NAMES: &[&str] = &["area", "price", "type", "stars", "day", "people", "food", "parking"];
const REQUESTABLE_NAMES: &[&str] = &["address", "phone", "postcode", "reference", "fee", "website", "hours", "email"];
const VALUE_NAMES: &[&[&str]] = &[
    &["north", "south", "east", "west", "centre", "airport"],
    &["cheap", "moderate", "expensive", "free", "premium", "budget"],
    &["guesthouse", "hotel", "museum", "park", "bistro", "theatre"],
    &["one", "two", "three", "four", "five", "six"],
    &["monday", "tuesday", "wednesday", "thursday", "friday", "saturday"],
    &["solo", "pair", "trio", "quad", "group", "party"],
    &["italian", "indian", "chinese", "british", "french", "thai"],
    &["yes", "no", "street", "garage", "valet", "nearby"],
];

impl WorldSchema {
    /// Random world: slot value lists are fixed by name, entity assignments
    /// are drawn uniformly. Every (slot, value) pair is held by at least one
    /// entity when there are enough entities.
    pub fn generate(cfg: &WorldGenConfig, rng: &mut Rng) -> Result<Self> {
        if cfg.domains.is_empty() || cfg.entities_per_domain == 0 || cfg.informable_per_domain == 0 {
            return Err(Error::Config("world needs domains, entities and informable slots".into()));
        }
        if cfg.informable_per_domain > INFORMABLE_NAMES.len()
            || cfg.requestable_per_domain > REQUESTABLE_NAMES.len()
            || cfg.values_per_slot == 0
            || cfg.values_per_slot > VALUE_NAMES[0].len()
        {
            return Err(Error::Config(format!("world generator limits exceeded: {cfg:?}")));
        }
        let mut domains = Vec::with_capacity(cfg.domains.len());
        for name in &cfg.domains {
            let informable: Vec<InformableSlot> = (0..cfg.informable_per_domain)
                .map(|s| InformableSlot {
                    name: INFORMABLE_NAMES[s].to_string(),
                    values: VALUE_NAMES[s][..cfg.values_per_slot].iter().map(|v| v.to_string()).collect(),
                })
                .collect();
            let requestable: Vec<String> = REQUESTABLE_NAMES[..cfg.requestable_per_domain]
                .iter()
                .map(|s| s.to_string())
                .collect();
            // Balanced columns: each value appears ~equally often, then shuffled.
            let columns: Vec<Vec<usize>> = (0..informable.len())
                .map(|_| {
                    let mut col: Vec<usize> = (0..cfg.entities_per_domain).map(|e| e % cfg.values_per_slot).collect();
                    col.shuffle(rng);
                    col
                })
                .collect();
            let entities = (0..cfg.entities_per_domain)
                .map(|e| Entity {
                    name: format!("{name}-{e}"),
                    informable: columns.iter().map(|c| c[e]).collect(),
                    requestable: requestable
                        .iter()
                        .map(|r| format!("{r}-{name}-{e}-{}", rng.random_range(100..1000)))
                        .collect(),
                })
                .collect();
            domains.push(DomainSchema {
                name: name.clone(),
                informable,
                requestable,
                entities,
            });
        }
        let world = WorldSchema { domains };
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(Error::Config("world has no domains".into()));
        }
        let mut names = std::collections::BTreeSet::new();
        for d in &self.domains {
            if !names.insert(d.name.as_str()) {
                return Err(Error::Config(format!("duplicate domain `{}`", d.name)));
            }
            if d.entities.is_empty() {
                return Err(Error::Config(format!("domain `{}` has an empty database", d.name)));
            }
            if d.informable.is_empty() {
                return Err(Error::Config(format!("domain `{}` has no informable slots", d.name)));
            }
            for s in &d.informable {
                if s.values.is_empty() {
                    return Err(Error::Config(format!("slot `{}.{}` has no values", d.name, s.name)));
                }
            }
            for e in &d.entities {
                let ok = e.informable.len() == d.informable.len()
                    && e.requestable.len() == d.requestable.len()
                    && e.informable.iter().zip(&d.informable).all(|(&v, s)| v < s.values.len());
                if !ok {
                    return Err(Error::Config(format!("entity `{}` does not assign every slot", e.name)));
                }
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "world {WORLD_VERSION}").unwrap();
        for d in &self.domains {
            writeln!(out, "\ndomain {}", d.name).unwrap();
            for s in &d.informable {
                writeln!(out, "informable {}: {}", s.name, s.values.join(" ")).unwrap();
            }
            if !d.requestable.is_empty() {
                writeln!(out, "requestable {}", d.requestable.join(" ")).unwrap();
            }
            for e in &d.entities {
                write!(out, "entity {}", e.name).unwrap();
                for (s, &v) in d.informable.iter().zip(&e.informable) {
                    write!(out, " {}={}", s.name, s.values[v]).unwrap();
                }
                for (r, v) in d.requestable.iter().zip(&e.requestable) {
                    write!(out, " {r}={v}").unwrap();
                }
                writeln!(out).unwrap();
            }
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::parse(origin, line, msg);
        let mut version_seen = false;
        let mut domains: Vec<DomainSchema> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (keyword, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            if !version_seen {
                if keyword != "world" {
                    return Err(err(lineno, "expected `world <version>` header".into()));
                }
                if rest != WORLD_VERSION {
                    return Err(Error::Version {
                        found: rest.to_string(),
                        expected: WORLD_VERSION.to_string(),
                    });
                }
                version_seen = true;
                continue;
            }
            if keyword == "domain" {
                if rest.is_empty() || rest.contains(char::is_whitespace) {
                    return Err(err(lineno, "domain needs exactly one name".into()));
                }
                domains.push(DomainSchema {
                    name: rest.to_string(),
                    informable: Vec::new(),
                    requestable: Vec::new(),
                    entities: Vec::new(),
                });
                continue;
            }
            let Some(domain) = domains.last_mut() else {
                return Err(err(lineno, format!("`{keyword}` before any `domain`")));
            };
            match keyword {
                "informable" => {
                    let (name, values) = rest
                        .split_once(':')
                        .ok_or_else(|| err(lineno, "expected `informable <slot>: <values>`".into()))?;
                    let values: Vec<String> = values.split_whitespace().map(str::to_string).collect();
                    if values.is_empty() {
                        return Err(err(lineno, "informable slot needs values".into()));
                    }
                    if !domain.entities.is_empty() {
                        return Err(err(lineno, "slots must precede entities".into()));
                    }
                    domain.informable.push(InformableSlot {
                        name: name.trim().to_string(),
                        values,
                    });
                }
                "requestable" => {
                    if !domain.entities.is_empty() {
                        return Err(err(lineno, "slots must precede entities".into()));
                    }
                    domain.requestable.extend(rest.split_whitespace().map(str::to_string));
                }
                "entity" => {
                    let mut tokens = rest.split_whitespace();
                    let name = tokens.next().ok_or_else(|| err(lineno, "entity needs a name".into()))?;
                    let mut informable = vec![None; domain.informable.len()];
                    let mut requestable = vec![None; domain.requestable.len()];
                    for tok in tokens {
                        let (slot, value) = tok
                            .split_once('=')
                            .ok_or_else(|| err(lineno, format!("expected slot=value, got `{tok}`")))?;
                        if let Some(s) = domain.informable.iter().position(|s| s.name == slot) {
                            let v = domain.informable[s]
                                .values
                                .iter()
                                .position(|v| v == value)
                                .ok_or_else(|| err(lineno, format!("`{value}` is not a value of `{slot}`")))?;
                            informable[s] = Some(v);
                        } else if let Some(r) = domain.requestable.iter().position(|r| r == slot) {
                            requestable[r] = Some(value.to_string());
                        } else {
                            return Err(err(lineno, format!("unknown slot `{slot}`")));
                        }
                    }
                    let informable: Option<Vec<usize>> = informable.into_iter().collect();
                    let requestable: Option<Vec<String>> = requestable.into_iter().collect();
                    let (Some(informable), Some(requestable)) = (informable, requestable) else {
                        return Err(err(lineno, format!("entity `{name}` leaves a slot unassigned")));
                    };
                    domain.entities.push(Entity {
                        name: name.to_string(),
                        informable,
                        requestable,
                    });
                }
                other => return Err(err(lineno, format!("unknown directive `{other}`"))),
            }
        }
        if !version_seen {
            return Err(err(1, "empty world file".into()));
        }
        let world = WorldSchema { domains };
        world.validate()?;
        Ok(world)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn text_round_trip() {
        let w = WorldSchema::generate(&WorldGenConfig::default(), &mut rng::stream(4, "world")).unwrap();
        let back = WorldSchema::parse(&w.to_text(), Path::new("mem")).unwrap();
        assert_eq!(w, back);
    }

    #[test]
    fn generator_is_seeded() {
        let cfg = WorldGenConfig::default();
        let a = WorldSchema::generate(&cfg, &mut rng::stream(4, "world")).unwrap();
        let b = WorldSchema::generate(&cfg, &mut rng::stream(4, "world")).unwrap();
        let c = WorldSchema::generate(&cfg, &mut rng::stream(5, "world")).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "world v1\ndomain hotel\ninformable area: north south\nentity h0 area=west\n";
        match WorldSchema::parse(text, Path::new("w.txt")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn incomplete_entity_rejected() {
        let text = "world v1\ndomain hotel\ninformable area: north\nrequestable phone\nentity h0 area=north\n";
        assert!(matches!(WorldSchema::parse(text, Path::new("w")), Err(Error::Parse { line: 5, .. })));
    }

    #[test]
    fn version_checked() {
        assert!(matches!(
            WorldSchema::parse("world v9\n", Path::new("w")),
            Err(Error::Version { .. })
        ));
    }
}
