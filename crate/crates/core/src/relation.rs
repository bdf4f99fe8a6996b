//! The ATOMIC-2020 relation catalog.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Top-level family a commonsense relation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    Social,
    Event,
    Physical,
}

/// One of the 23 ATOMIC-2020 commonsense relations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    // social-interaction
    XAttr,
    XEffect,
    XIntent,
    XNeed,
    XReact,
    XWant,
    OEffect,
    OReact,
    OWant,
    // event-centered
    IsAfter,
    IsBefore,
    HasSubEvent,
    HinderedBy,
    Causes,
    XReason,
    IsFilledBy,
    // physical-entity
    ObjectUse,
    AtLocation,
    MadeUpOf,
    HasProperty,
    CapableOf,
    Desires,
    NotDesires,
}

impl Relation {
    pub const ALL: [Relation; 23] = [
        Relation::XAttr,
        Relation::XEffect,
        Relation::XIntent,
        Relation::XNeed,
        Relation::XReact,
        Relation::XWant,
        Relation::OEffect,
        Relation::OReact,
        Relation::OWant,
        Relation::IsAfter,
        Relation::IsBefore,
        Relation::HasSubEvent,
        Relation::HinderedBy,
        Relation::Causes,
        Relation::XReason,
        Relation::IsFilledBy,
        Relation::ObjectUse,
        Relation::AtLocation,
        Relation::MadeUpOf,
        Relation::HasProperty,
        Relation::CapableOf,
        Relation::Desires,
        Relation::NotDesires,
    ];

    /// The five trigger relations used by the recommender, in their
    /// canonical order.
    pub const TRIGGERS: [Relation; 5] = [
        Relation::XIntent,
        Relation::XNeed,
        Relation::XWant,
        Relation::IsAfter,
        Relation::IsBefore,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Relation::XAttr => "xAttr",
            Relation::XEffect => "xEffect",
            Relation::XIntent => "xIntent",
            Relation::XNeed => "xNeed",
            Relation::XReact => "xReact",
            Relation::XWant => "xWant",
            Relation::OEffect => "oEffect",
            Relation::OReact => "oReact",
            Relation::OWant => "oWant",
            Relation::IsAfter => "isAfter",
            Relation::IsBefore => "isBefore",
            Relation::HasSubEvent => "HasSubEvent",
            Relation::HinderedBy => "HinderedBy",
            Relation::Causes => "Causes",
            Relation::XReason => "xReason",
            Relation::IsFilledBy => "isFilledBy",
            Relation::ObjectUse => "ObjectUse",
            Relation::AtLocation => "AtLocation",
            Relation::MadeUpOf => "MadeUpOf",
            Relation::HasProperty => "HasProperty",
            Relation::CapableOf => "CapableOf",
            Relation::Desires => "Desires",
            Relation::NotDesires => "NotDesires",
        }
    }

    pub fn kind(self) -> RelationKind {
        use Relation::*;
        match self {
            XAttr | XEffect | XIntent | XNeed | XReact | XWant | OEffect | OReact | OWant => {
                RelationKind::Social
            }
            IsAfter | IsBefore | HasSubEvent | HinderedBy | Causes | XReason | IsFilledBy => {
                RelationKind::Event
            }
            ObjectUse | AtLocation | MadeUpOf | HasProperty | CapableOf | Desires | NotDesires => {
                RelationKind::Physical
            }
        }
    }

    /// Whether the relation is one of the five trigger relations the
    /// recommender knows how to prompt for.
    pub fn is_trigger(self) -> bool {
        Self::TRIGGERS.contains(&self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown relation tag `{0}`")]
pub struct UnknownRelation(pub String);

impl FromStr for Relation {
    type Err = UnknownRelation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relation::ALL
            .iter()
            .copied()
            .find(|r| r.tag() == s)
            .ok_or_else(|| UnknownRelation(s.to_string()))
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl Serialize for Relation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.tag())
    }
}

impl<'de> Deserialize<'de> for Relation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn catalog_has_23_unique_tags() {
        let tags: HashSet<_> = Relation::ALL.iter().map(|r| r.tag()).collect();
        assert_eq!(tags.len(), 23);
        let count = |k| Relation::ALL.iter().filter(|r| r.kind() == k).count();
        assert_eq!(count(RelationKind::Social), 9);
        assert_eq!(count(RelationKind::Event), 7);
        assert_eq!(count(RelationKind::Physical), 7);
    }

    #[test]
    fn trigger_relations_have_expected_kinds() {
        assert_eq!(Relation::XIntent.kind(), RelationKind::Social);
        assert_eq!(Relation::XNeed.kind(), RelationKind::Social);
        assert_eq!(Relation::XWant.kind(), RelationKind::Social);
        assert_eq!(Relation::IsAfter.kind(), RelationKind::Event);
        assert_eq!(Relation::IsBefore.kind(), RelationKind::Event);
        assert!(!Relation::OEffect.is_trigger());
    }

    #[test]
    fn tags_round_trip() {
        for r in Relation::ALL {
            assert_eq!(r.tag().parse::<Relation>().unwrap(), r);
            let json = serde_json::to_string(&r).unwrap();
            assert_eq!(serde_json::from_str::<Relation>(&json).unwrap(), r);
        }
        assert!("XNeed".parse::<Relation>().is_err());
    }
}
