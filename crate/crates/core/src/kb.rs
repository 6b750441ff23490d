//! Small movie-domain knowledge base used for recommendations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::normalize_value;

const BUILTIN_KB: &str = include_str!("../data/kb.json");

#[derive(Debug, Error)]
pub enum KbError {
    #[error("entry `{0}` has an empty name")]
    EmptyName(String),
    #[error("{entity_type} `{name}` is defined twice")]
    Duplicate {
        entity_type: EntityType,
        name: String,
    },
    #[error("{entity_type} `{name}` cannot carry relation `{relation}`")]
    BadSource {
        entity_type: EntityType,
        name: String,
        relation: RelationKind,
    },
    #[error("`{name}` {relation} `{target}`, but no such {expected} exists")]
    DanglingTarget {
        name: String,
        relation: RelationKind,
        target: String,
        expected: EntityType,
    },
    #[error("malformed knowledge base: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read knowledge base: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    Director,
    Actor,
    Film,
    Genre,
}

impl EntityType {
    /// Maps a favourite category (`film`, `actor`, ...) to its entity type.
    pub fn for_category(category: &str) -> Option<Self> {
        match category {
            "director" => Some(EntityType::Director),
            "actor" => Some(EntityType::Actor),
            "film" => Some(EntityType::Film),
            "genre" => Some(EntityType::Genre),
            _ => None,
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityType::Director => "director",
            EntityType::Actor => "actor",
            EntityType::Film => "film",
            EntityType::Genre => "genre",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationKind {
    DirectedBy,
    ActedIn,
    HasGenre,
    Upcoming,
}

impl RelationKind {
    fn allowed_source(self, source: EntityType) -> bool {
        match self {
            RelationKind::DirectedBy | RelationKind::HasGenre => source == EntityType::Film,
            RelationKind::ActedIn => source == EntityType::Actor,
            RelationKind::Upcoming => {
                matches!(source, EntityType::Actor | EntityType::Director)
            }
        }
    }

    fn target_type(self) -> EntityType {
        match self {
            RelationKind::DirectedBy => EntityType::Director,
            RelationKind::HasGenre => EntityType::Genre,
            RelationKind::ActedIn | RelationKind::Upcoming => EntityType::Film,
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelationKind::DirectedBy => "directed_by",
            RelationKind::ActedIn => "acted_in",
            RelationKind::HasGenre => "has_genre",
            RelationKind::Upcoming => "upcoming",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    pub relation: RelationKind,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbEntry {
    pub entity_type: EntityType,
    pub name: String,
    #[serde(default)]
    pub relations: BTreeSet<Relation>,
}

impl KbEntry {
    pub fn targets(&self, kind: RelationKind) -> impl Iterator<Item = &str> {
        self.relations
            .iter()
            .filter(move |r| r.relation == kind)
            .map(|r| r.target.as_str())
    }
}

/// Why a film was recommended. Rendered to text by the dialogue templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecommendReason {
    /// Same director as a favourite, and shares a genre with the favourite film.
    GenreMatch {
        director: String,
        genre: String,
        favourite_film: String,
    },
    /// Same director as a favourite, no genre in common.
    SameDirector { director: String },
    /// An upcoming film featuring a favourite actor.
    UpcomingWithActor { actor: String },
}

impl RecommendReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RecommendReason::GenreMatch { .. } => "genre_match",
            RecommendReason::SameDirector { .. } => "same_director",
            RecommendReason::UpcomingWithActor { .. } => "upcoming_with_actor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub film: String,
    pub reason: RecommendReason,
}

/// Immutable entity graph keyed by (type, normalized name).
#[derive(Debug, Clone)]
pub struct KnowledgeBase {
    entries: BTreeMap<(EntityType, String), KbEntry>,
}

impl KnowledgeBase {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_KB).expect("bundled knowledge base is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KbError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn from_json(text: &str) -> Result<Self, KbError> {
        let raw: Vec<KbEntry> = serde_json::from_str(text)?;
        Self::from_entries(raw)
    }

    /// Validates and indexes entries. Relations always connect two different
    /// entity types, so the graph cannot contain a cycle within one relation.
    pub fn from_entries(raw: Vec<KbEntry>) -> Result<Self, KbError> {
        let mut entries = BTreeMap::new();
        for mut entry in raw {
            entry.name =
                normalize_value(&entry.name).map_err(|_| KbError::EmptyName(entry.name.clone()))?;
            let mut relations = BTreeSet::new();
            for rel in &entry.relations {
                if !rel.relation.allowed_source(entry.entity_type) {
                    return Err(KbError::BadSource {
                        entity_type: entry.entity_type,
                        name: entry.name.clone(),
                        relation: rel.relation,
                    });
                }
                let target = normalize_value(&rel.target)
                    .map_err(|_| KbError::EmptyName(rel.target.clone()))?;
                relations.insert(Relation {
                    relation: rel.relation,
                    target,
                });
            }
            entry.relations = relations;
            let id = (entry.entity_type, entry.name.clone());
            if entries.contains_key(&id) {
                return Err(KbError::Duplicate {
                    entity_type: entry.entity_type,
                    name: entry.name,
                });
            }
            entries.insert(id, entry);
        }
        for entry in entries.values() {
            for rel in &entry.relations {
                let expected = rel.relation.target_type();
                if !entries.contains_key(&(expected, rel.target.clone())) {
                    return Err(KbError::DanglingTarget {
                        name: entry.name.clone(),
                        relation: rel.relation,
                        target: rel.target.clone(),
                        expected,
                    });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact match on the normalized name.
    pub fn lookup(&self, entity_type: EntityType, name: &str) -> Option<&KbEntry> {
        let name = normalize_value(name).ok()?;
        self.entries.get(&(entity_type, name))
    }

    /// Finds the entity of `entity_type` an answer refers to: an exact name,
    /// else the longest name occurring in the answer on word boundaries.
    pub fn match_entity(&self, entity_type: EntityType, answer: &str) -> Option<&KbEntry> {
        let answer = normalize_value(answer).ok()?;
        if let Some(e) = self.entries.get(&(entity_type, answer.clone())) {
            return Some(e);
        }
        let words: String = answer
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { ' ' })
            .collect();
        let padded = format!(
            " {} ",
            words.split_whitespace().collect::<Vec<_>>().join(" ")
        );
        self.entries
            .iter()
            .filter(|((t, name), _)| *t == entity_type && padded.contains(&format!(" {name} ")))
            .map(|(_, e)| e)
            .max_by_key(|e| e.name.len())
    }

    /// Films whose `directed_by` points at `director`, in name order.
    pub fn films_by<'a>(&'a self, director: &'a str) -> impl Iterator<Item = &'a KbEntry> + 'a {
        self.entries
            .range((EntityType::Film, String::new())..)
            .take_while(|((t, _), _)| *t == EntityType::Film)
            .map(|(_, e)| e)
            .filter(move |e| e.targets(RelationKind::DirectedBy).any(|d| d == director))
    }

    fn genres_of(&self, film: &str) -> BTreeSet<&str> {
        self.lookup(EntityType::Film, film)
            .map(|e| e.targets(RelationKind::HasGenre).collect())
            .unwrap_or_default()
    }

    /// Picks one film to suggest from the user's favourites, given as
    /// normalized `(category, value)` pairs.
    ///
    /// A favourite director's unnamed films come first, preferring ones that
    /// share a genre with a favourite film; then upcoming films of a
    /// favourite actor. Ties break on the film name.
    pub fn recommend(&self, favourites: &BTreeSet<(String, String)>) -> Option<Recommendation> {
        let values = |category: &'static str| {
            favourites
                .iter()
                .filter(move |(c, _)| c == category)
                .map(|(_, v)| v.as_str())
        };
        let named_films: BTreeSet<&str> = values("film").collect();
        let favourite_genres: BTreeMap<&str, &str> = named_films
            .iter()
            .flat_map(|film| self.genres_of(film).into_iter().map(move |g| (g, *film)))
            .collect();

        // (no genre overlap, film, director, (shared genre, favourite film));
        // genre matches sort first.
        type Candidate<'a> = (bool, &'a str, &'a str, Option<(&'a str, &'a str)>);
        let mut by_director: Vec<Candidate> = Vec::new();
        for director in values("director") {
            for film in self.films_by(director) {
                if named_films.contains(film.name.as_str()) {
                    continue;
                }
                let overlap = film
                    .targets(RelationKind::HasGenre)
                    .find_map(|g| favourite_genres.get(g).map(|fav| (g, *fav)));
                by_director.push((overlap.is_none(), film.name.as_str(), director, overlap));
            }
        }
        by_director.sort();
        if let Some((_, film, director, overlap)) = by_director.first() {
            let reason = match overlap {
                Some((genre, favourite_film)) => RecommendReason::GenreMatch {
                    director: director.to_string(),
                    genre: genre.to_string(),
                    favourite_film: favourite_film.to_string(),
                },
                None => RecommendReason::SameDirector {
                    director: director.to_string(),
                },
            };
            return Some(Recommendation {
                film: film.to_string(),
                reason,
            });
        }

        let mut upcoming: Vec<(&str, &str)> = values("actor")
            .filter_map(|actor| self.lookup(EntityType::Actor, actor))
            .flat_map(|actor| {
                actor
                    .targets(RelationKind::Upcoming)
                    .map(move |film| (film, actor.name.as_str()))
            })
            .filter(|(film, _)| !named_films.contains(film))
            .collect();
        upcoming.sort();
        upcoming.first().map(|(film, actor)| Recommendation {
            film: film.to_string(),
            reason: RecommendReason::UpcomingWithActor {
                actor: actor.to_string(),
            },
        })
    }
}

impl Default for KnowledgeBase {
    fn default() -> Self {
        Self::builtin()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn entity_matching() {
        let kb = KnowledgeBase::builtin();
        let film = |a: &str| {
            kb.match_entity(EntityType::Film, a)
                .map(|e| e.name.as_str())
        };
        assert_eq!(film("  TENET "), Some("tenet"));
        assert_eq!(film("I think Interstellar!"), Some("interstellar"));
        assert_eq!(
            film("the wolf of wall street, I guess"),
            Some("the wolf of wall street")
        );
        assert_eq!(film("pretenet"), None);
        assert_eq!(film("christopher nolan"), None);
    }

    fn favs(pairs: &[(&str, &str)]) -> BTreeSet<(String, String)> {
        pairs
            .iter()
            .map(|(c, v)| (c.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn recommends_same_director_same_genre() {
        let kb = KnowledgeBase::builtin();
        let rec = kb
            .recommend(&favs(&[
                ("director", "christopher nolan"),
                ("film", "tenet"),
            ]))
            .unwrap();
        assert_eq!(rec.film, "interstellar");
        assert_eq!(
            rec.reason,
            RecommendReason::GenreMatch {
                director: "christopher nolan".into(),
                genre: "science fiction".into(),
                favourite_film: "tenet".into(),
            }
        );
    }

    #[test]
    fn recommends_upcoming_film_of_favourite_actor() {
        let kb = KnowledgeBase::builtin();
        let rec = kb
            .recommend(&favs(&[("actor", "leonardo dicaprio")]))
            .unwrap();
        assert_eq!(rec.film, "killers of the flower moon");
        assert_eq!(
            rec.reason,
            RecommendReason::UpcomingWithActor {
                actor: "leonardo dicaprio".into()
            }
        );
    }

    #[test]
    fn nothing_to_recommend() {
        let kb = KnowledgeBase::builtin();
        assert_eq!(kb.recommend(&BTreeSet::new()), None);
        assert_eq!(kb.recommend(&favs(&[("director", "someone else")])), None);
    }

    #[test]
    fn director_without_favourite_film_breaks_ties_by_name() {
        let kb = KnowledgeBase::builtin();
        let rec = kb
            .recommend(&favs(&[("director", "christopher nolan")]))
            .unwrap();
        assert_eq!(rec.film, "dunkirk");
        assert!(matches!(rec.reason, RecommendReason::SameDirector { .. }));
    }

    #[test]
    fn lookup_is_normalized() {
        let kb = KnowledgeBase::builtin();
        let tenet = kb.lookup(EntityType::Film, "tenet").unwrap();
        assert!(tenet
            .targets(RelationKind::HasGenre)
            .any(|g| g == "science fiction"));
        assert!(kb.lookup(EntityType::Director, "unknown person").is_none());
        assert!(kb.lookup(EntityType::Actor, "Leonardo DiCaprio").is_some());
    }

    #[test]
    fn seed_contents() {
        let kb = KnowledgeBase::builtin();
        let nolan: BTreeSet<_> = kb
            .films_by("christopher nolan")
            .map(|f| f.name.as_str())
            .collect();
        assert!(nolan.contains("interstellar") && nolan.contains("tenet"));
        for film in ["interstellar", "tenet"] {
            assert!(kb.genres_of(film).contains("science fiction"));
        }
        let leo = kb.lookup(EntityType::Actor, "leonardo dicaprio").unwrap();
        assert!(leo
            .targets(RelationKind::Upcoming)
            .any(|f| f == "killers of the flower moon"));
    }

    #[test]
    fn rejects_dangling_and_misplaced_relations() {
        let dangling = r#"[{"entity_type":"film","name":"x","relations":[{"relation":"directed_by","target":"nobody"}]}]"#;
        assert!(matches!(
            KnowledgeBase::from_json(dangling),
            Err(KbError::DanglingTarget { .. })
        ));
        let misplaced = r#"[{"entity_type":"genre","name":"x","relations":[{"relation":"directed_by","target":"x"}]}]"#;
        assert!(matches!(
            KnowledgeBase::from_json(misplaced),
            Err(KbError::BadSource { .. })
        ));
        let dup = r#"[{"entity_type":"genre","name":"War"},{"entity_type":"genre","name":"war "}]"#;
        assert!(matches!(
            KnowledgeBase::from_json(dup),
            Err(KbError::Duplicate { .. })
        ));
    }

    fn arb_favourites() -> impl Strategy<Value = BTreeSet<(String, String)>> {
        let pool = vec![
            ("director", "christopher nolan"),
            ("director", "martin scorsese"),
            ("film", "tenet"),
            ("film", "interstellar"),
            ("film", "dunkirk"),
            ("film", "killers of the flower moon"),
            ("film", "the wolf of wall street"),
            ("actor", "leonardo dicaprio"),
            ("genre", "war"),
        ];
        prop::sample::subsequence(pool, 0..=9).prop_map(|v| {
            v.into_iter()
                .map(|(c, n)| (c.to_string(), n.to_string()))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn never_recommends_a_named_film(favs in arb_favourites()) {
            let kb = KnowledgeBase::builtin();
            if let Some(rec) = kb.recommend(&favs) {
                prop_assert!(!favs.contains(&("film".to_string(), rec.film.clone())));
                prop_assert!(kb.lookup(EntityType::Film, &rec.film).is_some());
            }
            prop_assert_eq!(kb.recommend(&favs), kb.recommend(&favs));
        }
    }
}
