// SPDX-License-Identifier: MIT OR Apache-2.0

//! Ingredient tables. Each lives in its own CSV inside an ingredients
//! directory; every file is optional and only the tables an experiment
//! needs are required when building it.
//!
//! | file            | columns                                           |
//! |-----------------|---------------------------------------------------|
//! | `items.csv`     | `object,feature` (one row per object/feature)     |
//! | `scenes.csv`    | `scene,object,likeliness`                         |
//! | `pairs.csv`     | `item1,item2,relatedness`                         |
//! | `foods.csv`     | `food,food_kind,animal,animal_class[,eats]`       |
//! | `analogies.csv` | `a,b,c,d`                                         |
//! | `articles.csv`  | `word,article` (extra a/an exceptions)            |
//! | `filler.txt`    | filler text for buried variants                   |

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{ArticleRule, DesignError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFeature {
    pub object: String,
    pub feature: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePair {
    pub scene: String,
    pub object: String,
    /// Mean rating on the 1..=4 scale.
    pub likeliness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordPair {
    pub item1: String,
    pub item2: String,
    pub relatedness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoodAnimal {
    pub food: String,
    /// `plant` or `meat`.
    pub food_kind: String,
    pub animal: String,
    /// `herbivore` or `carnivore`.
    pub animal_class: String,
    /// Derived from kind/class when absent.
    #[serde(default, deserialize_with = "empty_as_none")]
    pub eats: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analogy {
    pub a: String,
    pub b: String,
    pub c: String,
    pub d: String,
}

impl Analogy {
    pub fn terms(&self) -> [String; 4] {
        [self.a.clone(), self.b.clone(), self.c.clone(), self.d.clone()]
    }
}

fn empty_as_none<'de, D>(d: D) -> Result<Option<u8>, D::Error>
where
    D: serde::Deserializer<'de>,
{
    let s: Option<String> = Option::deserialize(d)?;
    match s.as_deref().map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => v.parse().map(Some).map_err(serde::de::Error::custom),
    }
}

#[derive(Debug, Clone, Default)]
pub struct Ingredients {
    pub item_features: Vec<ItemFeature>,
    pub scene_pairs: Vec<ScenePair>,
    pub word_pairs: Vec<WordPair>,
    pub food_animals: Vec<FoodAnimal>,
    pub analogies: Vec<Analogy>,
    pub filler: Option<String>,
    pub articles: ArticleRule,
}

impl Ingredients {
    /// Loads whichever tables exist in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self, DesignError> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(DesignError::Io {
                path: dir.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
            });
        }
        let mut ing = Ingredients {
            item_features: read_table(&dir.join("items.csv"))?,
            scene_pairs: read_table(&dir.join("scenes.csv"))?,
            word_pairs: read_table(&dir.join("pairs.csv"))?,
            food_animals: read_table(&dir.join("foods.csv"))?,
            analogies: read_table(&dir.join("analogies.csv"))?,
            ..Default::default()
        };
        let filler = dir.join("filler.txt");
        if filler.exists() {
            ing.filler = Some(read_text(&filler)?.trim().to_string());
        }
        let articles = dir.join("articles.csv");
        if articles.exists() {
            ing.articles.extend_from_csv(&read_text(&articles)?, "articles.csv")?;
        }
        Ok(ing)
    }
}

fn read_text(path: &Path) -> Result<String, DesignError> {
    std::fs::read_to_string(path).map_err(|source| DesignError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_table<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>, DesignError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = read_text(path)?;
    parse_table(&text, &path.display().to_string())
}

pub(crate) fn parse_table<R: DeserializeOwned>(text: &str, name: &str) -> Result<Vec<R>, DesignError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    reader
        .deserialize()
        .collect::<Result<Vec<R>, _>>()
        .map_err(|source| DesignError::Csv {
            file: name.to_string(),
            source,
        })
}
