//! Coarse AMR relation groups.

use std::fmt;

use serde::{Deserialize, Serialize};

/// One of the 19 coarse categories raw AMR relations collapse into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationGroup {
    Arg0,
    Arg1,
    Arg2,
    Arg3,
    Arg4,
    Destination,
    Source,
    Instrument,
    Beneficiary,
    PrepRoles,
    OpRoles,
    EntityRole,
    ArgXRole,
    PlaceRole,
    MediumRole,
    ModifierRole,
    PartWholeRole,
    TimeRole,
    Others,
}

impl RelationGroup {
    pub const COUNT: usize = 19;

    pub const ALL: [RelationGroup; 19] = [
        RelationGroup::Arg0,
        RelationGroup::Arg1,
        RelationGroup::Arg2,
        RelationGroup::Arg3,
        RelationGroup::Arg4,
        RelationGroup::Destination,
        RelationGroup::Source,
        RelationGroup::Instrument,
        RelationGroup::Beneficiary,
        RelationGroup::PrepRoles,
        RelationGroup::OpRoles,
        RelationGroup::EntityRole,
        RelationGroup::ArgXRole,
        RelationGroup::PlaceRole,
        RelationGroup::MediumRole,
        RelationGroup::ModifierRole,
        RelationGroup::PartWholeRole,
        RelationGroup::TimeRole,
        RelationGroup::Others,
    ];

    /// Dense index in `0..19`, used for embedding lookups.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Short tag used when rendering scoring sequences.
    pub fn tag(self) -> &'static str {
        match self {
            RelationGroup::Arg0 => "ARG0",
            RelationGroup::Arg1 => "ARG1",
            RelationGroup::Arg2 => "ARG2",
            RelationGroup::Arg3 => "ARG3",
            RelationGroup::Arg4 => "ARG4",
            RelationGroup::Destination => "DESTINATION",
            RelationGroup::Source => "SOURCE",
            RelationGroup::Instrument => "INSTRUMENT",
            RelationGroup::Beneficiary => "BENEFICIARY",
            RelationGroup::PrepRoles => "PREP",
            RelationGroup::OpRoles => "OP",
            RelationGroup::EntityRole => "ENTITY",
            RelationGroup::ArgXRole => "ARGX",
            RelationGroup::PlaceRole => "PLACE",
            RelationGroup::MediumRole => "MEDIUM",
            RelationGroup::ModifierRole => "MODIFIER",
            RelationGroup::PartWholeRole => "PARTWHOLE",
            RelationGroup::TimeRole => "TIME",
            RelationGroup::Others => "OTHER",
        }
    }

    /// A raw relation name that maps back to this group.
    pub fn canonical_relation(self) -> &'static str {
        match self {
            RelationGroup::Arg0 => ":ARG0",
            RelationGroup::Arg1 => ":ARG1",
            RelationGroup::Arg2 => ":ARG2",
            RelationGroup::Arg3 => ":ARG3",
            RelationGroup::Arg4 => ":ARG4",
            RelationGroup::Destination => ":destination",
            RelationGroup::Source => ":source",
            RelationGroup::Instrument => ":instrument",
            RelationGroup::Beneficiary => ":beneficiary",
            RelationGroup::PrepRoles => ":prep-with",
            RelationGroup::OpRoles => ":op1",
            RelationGroup::EntityRole => ":name",
            RelationGroup::ArgXRole => ":ARG5",
            RelationGroup::PlaceRole => ":location",
            RelationGroup::MediumRole => ":manner",
            RelationGroup::ModifierRole => ":mod",
            RelationGroup::PartWholeRole => ":part",
            RelationGroup::TimeRole => ":time",
            RelationGroup::Others => ":other",
        }
    }
}

impl fmt::Display for RelationGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

const TIME_RELATIONS: &[&str] = &[
    "calendar",
    "century",
    "day",
    "dayperiod",
    "decade",
    "era",
    "month",
    "quarter",
    "season",
    "timezone",
    "weekday",
    "year",
    "year2",
    "time",
];

/// Splits an inverted relation name (`ARG0-of`) into its base name and an
/// inversion flag. Accepts names with or without the leading colon.
///
/// `consist-of` and the `prep-*-of` family are base relations, not
/// inversions.
pub fn split_inverse(raw: &str) -> (&str, bool) {
    let name = raw.strip_prefix(':').unwrap_or(raw);
    if name == "consist-of" || name.starts_with("prep-") {
        return (name, false);
    }
    match name.strip_suffix("-of") {
        Some(base) if !base.is_empty() => (base, true),
        _ => (name, false),
    }
}

/// Maps a raw relation string such as `:ARG0`, `:location` or `:ARG1-of`
/// to its group. Total: anything unrecognised lands in
/// [`RelationGroup::Others`].
pub fn group_relation(raw: &str) -> RelationGroup {
    let (name, _) = split_inverse(raw);
    let upper = name.to_ascii_uppercase();
    match upper.as_str() {
        "ARG0" => return RelationGroup::Arg0,
        "ARG1" => return RelationGroup::Arg1,
        "ARG2" => return RelationGroup::Arg2,
        "ARG3" => return RelationGroup::Arg3,
        "ARG4" => return RelationGroup::Arg4,
        "ARG5" | "ARG6" | "ARG7" | "ARG8" | "ARG9" => return RelationGroup::ArgXRole,
        _ => {}
    }
    match name {
        "destination" => RelationGroup::Destination,
        "source" => RelationGroup::Source,
        "instrument" => RelationGroup::Instrument,
        "beneficiary" => RelationGroup::Beneficiary,
        "wiki" | "name" => RelationGroup::EntityRole,
        "location" | "path" | "direction" => RelationGroup::PlaceRole,
        "manner" | "poss" | "medium" | "topic" => RelationGroup::MediumRole,
        "domain" | "mod" | "example" => RelationGroup::ModifierRole,
        "part" | "consist" | "consist-of" | "subevent" | "subset" => RelationGroup::PartWholeRole,
        n if TIME_RELATIONS.contains(&n) => RelationGroup::TimeRole,
        n if n.starts_with("prep") => RelationGroup::PrepRoles,
        n if n.starts_with("op") => RelationGroup::OpRoles,
        _ => RelationGroup::Others,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(group_relation(":ARG0"), RelationGroup::Arg0);
        assert_eq!(group_relation(":location"), RelationGroup::PlaceRole);
        assert_eq!(group_relation(":prep-against"), RelationGroup::PrepRoles);
        assert_eq!(group_relation(":snt7"), RelationGroup::Others);
    }

    #[test]
    fn inversions_group_like_their_base() {
        assert_eq!(group_relation(":ARG0-of"), RelationGroup::Arg0);
        assert_eq!(group_relation(":location-of"), RelationGroup::PlaceRole);
        assert_eq!(split_inverse(":consist-of"), ("consist-of", false));
        assert_eq!(split_inverse(":consist-of-of"), ("consist-of", true));
        assert_eq!(group_relation(":consist-of"), RelationGroup::PartWholeRole);
        assert_eq!(split_inverse(":prep-out-of"), ("prep-out-of", false));
    }

    #[test]
    fn canonical_names_group_back() {
        for g in RelationGroup::ALL {
            assert_eq!(group_relation(g.canonical_relation()), g);
        }
    }

    #[test]
    fn index_round_trips() {
        for (i, g) in RelationGroup::ALL.iter().enumerate() {
            assert_eq!(g.index(), i);
            assert_eq!(RelationGroup::from_index(i), Some(*g));
        }
        assert_eq!(RelationGroup::from_index(19), None);
    }

    #[test]
    fn op_prefix_does_not_swallow_others() {
        assert_eq!(group_relation(":op1"), RelationGroup::OpRoles);
        assert_eq!(group_relation(":ord"), RelationGroup::Others);
        assert_eq!(group_relation(":polarity"), RelationGroup::Others);
        assert_eq!(group_relation(":polite"), RelationGroup::Others);
    }
}
