// SPDX-License-Identifier: MIT OR Apache-2.0

//! Text templates for each experiment.

use std::collections::{BTreeMap, BTreeSet};

use super::{slug, CharSpan, DesignError, ExampleRecord, Experiment, Ingredients, Manifest, Variant};

/// Appends text while tracking character offsets of marked words.
#[derive(Default)]
struct Composer {
    text: String,
    chars: usize,
}

impl Composer {
    fn push(&mut self, s: &str) -> &mut Self {
        self.text.push_str(s);
        self.chars += s.chars().count();
        self
    }

    fn mark(&mut self, s: &str) -> CharSpan {
        let start = self.chars;
        self.push(s);
        CharSpan::new(start, self.chars)
    }

    fn finish(self) -> String {
        self.text
    }
}

fn record(id: String, text: String, target: Vec<CharSpan>, variant: Variant) -> ExampleRecord {
    ExampleRecord {
        id,
        text,
        target_span: target,
        extra_spans: BTreeMap::new(),
        labels: BTreeMap::new(),
        groups: BTreeMap::new(),
        variant,
        burial: None,
    }
}

fn finish(experiment: Experiment, template: &str, examples: Vec<ExampleRecord>) -> Result<Manifest, DesignError> {
    let m = Manifest {
        experiment_id: experiment.id().to_string(),
        template_id: template.to_string(),
        examples,
    };
    m.check()?;
    Ok(m)
}

/// How many features/objects the item experiment keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ItemSelection {
    /// Most frequently reported features.
    pub n_features: usize,
    /// Objects with the most reported features.
    pub n_objects: usize,
}

impl Default for ItemSelection {
    fn default() -> Self {
        Self {
            n_features: 20,
            n_objects: 300,
        }
    }
}

/// "An apple": one example per object, one binary label per selected feature.
pub fn build_item_manifest(ing: &Ingredients, sel: &ItemSelection) -> Result<Manifest, DesignError> {
    if ing.item_features.is_empty() {
        return Err(DesignError::EmptyTable("items"));
    }
    let mut by_object: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut by_feature: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (i, row) in ing.item_features.iter().enumerate() {
        if row.object.trim().is_empty() || row.feature.trim().is_empty() {
            return Err(DesignError::BadRow {
                table: "items",
                row: i + 1,
                msg: "empty object or feature".into(),
            });
        }
        by_object.entry(&row.object).or_default().insert(&row.feature);
        by_feature.entry(&row.feature).or_default().insert(&row.object);
    }

    // ties broken by name for determinism
    let mut features: Vec<(&str, usize)> = by_feature.iter().map(|(f, o)| (*f, o.len())).collect();
    features.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    features.truncate(sel.n_features);
    let mut objects: Vec<(&str, usize)> = by_object.iter().map(|(o, f)| (*o, f.len())).collect();
    objects.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    objects.truncate(sel.n_objects);
    objects.sort_by(|a, b| a.0.cmp(b.0));

    let examples = objects
        .iter()
        .map(|(object, _)| {
            let mut c = Composer::default();
            c.push(ing.articles.article_cap(object)).push(" ");
            let span = c.mark(object);
            let mut rec = record(format!("item-{}", slug(object)), c.finish(), vec![span], Variant::Orig);
            let has = &by_object[object];
            for (feature, _) in &features {
                let v = if has.contains(feature) { 1.0 } else { 0.0 };
                rec.labels.insert(feature.to_string(), v);
            }
            rec
        })
        .collect();
    finish(Experiment::Items, "item", examples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneTemplate {
    /// "In a {SCENE}, a {OBJECT}"
    InScene,
    /// "A {SCENE} and {OBJECT}"
    AndForm,
}

pub fn build_scene_manifest(ing: &Ingredients, template: SceneTemplate) -> Result<Manifest, DesignError> {
    if ing.scene_pairs.is_empty() {
        return Err(DesignError::EmptyTable("scenes"));
    }
    let art = &ing.articles;
    let mut examples = Vec::with_capacity(ing.scene_pairs.len());
    for p in &ing.scene_pairs {
        if !(1.0..=4.0).contains(&p.likeliness) {
            return Err(DesignError::ScoreOutOfRange {
                scene: p.scene.clone(),
                object: p.object.clone(),
                score: p.likeliness,
            });
        }
        let mut c = Composer::default();
        let span = match template {
            SceneTemplate::InScene => {
                c.push("In ").push(art.article(&p.scene)).push(" ");
                c.push(&p.scene).push(", ").push(art.article(&p.object)).push(" ");
                c.mark(&p.object)
            }
            SceneTemplate::AndForm => {
                c.push(art.article_cap(&p.scene)).push(" ").push(&p.scene).push(" and ");
                c.mark(&p.object)
            }
        };
        let mut rec = record(
            format!("scene-{}-{}", slug(&p.scene), slug(&p.object)),
            c.finish(),
            vec![span],
            Variant::Orig,
        );
        rec.labels.insert("likeliness".into(), p.likeliness);
        rec.groups.insert("object".into(), slug(&p.object));
        examples.push(rec);
    }
    let (experiment, name) = match template {
        SceneTemplate::InScene => (Experiment::SceneInScene, "scene_in_scene"),
        SceneTemplate::AndForm => (Experiment::SceneAndForm, "scene_and_form"),
    };
    finish(experiment, name, examples)
}

/// Median of the ratings; ratings at or above it count as related.
pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// "An organ and church": both orders per pair, target on the second item.
pub fn build_pair_manifest(ing: &Ingredients) -> Result<Manifest, DesignError> {
    if ing.word_pairs.is_empty() {
        return Err(DesignError::EmptyTable("pairs"));
    }
    let ratings: Vec<f64> = ing.word_pairs.iter().map(|p| p.relatedness).collect();
    let threshold = median(&ratings);
    let art = &ing.articles;
    let mut examples = Vec::with_capacity(2 * ing.word_pairs.len());
    for (i, p) in ing.word_pairs.iter().enumerate() {
        if !p.relatedness.is_finite() {
            return Err(DesignError::BadRow {
                table: "pairs",
                row: i + 1,
                msg: "non-finite relatedness".into(),
            });
        }
        let pair_id = format!("pair{i:03}");
        let related = if p.relatedness >= threshold { 1.0 } else { 0.0 };
        for (variant, first, second) in [
            (Variant::Orig, &p.item1, &p.item2),
            (Variant::Flipped, &p.item2, &p.item1),
        ] {
            let mut c = Composer::default();
            c.push(art.article_cap(first)).push(" ").push(first).push(" and ");
            let span = c.mark(second);
            let mut rec = record(format!("{pair_id}-{variant}"), c.finish(), vec![span], variant);
            rec.labels.insert("related".into(), related);
            rec.labels.insert("relatedness".into(), p.relatedness);
            rec.groups.insert("pair".into(), pair_id.clone());
            examples.push(rec);
        }
    }
    finish(Experiment::Pairs, "pair", examples)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoodOrder {
    /// "A leaf and a deer"
    FoodFirst,
    /// "A deer and a leaf"
    FoodSecond,
}

pub fn build_food_manifest(ing: &Ingredients, order: FoodOrder) -> Result<Manifest, DesignError> {
    if ing.food_animals.is_empty() {
        return Err(DesignError::EmptyTable("foods"));
    }
    let art = &ing.articles;
    let mut examples = Vec::with_capacity(ing.food_animals.len());
    for (i, row) in ing.food_animals.iter().enumerate() {
        let herbivore = match row.animal_class.as_str() {
            "herbivore" => true,
            "carnivore" => false,
            other => return Err(DesignError::AnimalClass(other.to_string())),
        };
        let plant = match row.food_kind.as_str() {
            "plant" => true,
            "meat" => false,
            other => {
                return Err(DesignError::BadRow {
                    table: "foods",
                    row: i + 1,
                    msg: format!("food kind {other:?} is neither plant nor meat"),
                })
            }
        };
        let eats = match row.eats {
            Some(v @ (0 | 1)) => v,
            Some(v) => {
                return Err(DesignError::BadRow {
                    table: "foods",
                    row: i + 1,
                    msg: format!("eats flag must be 0 or 1, got {v}"),
                })
            }
            None => u8::from(herbivore == plant),
        };
        let (first, second) = match order {
            FoodOrder::FoodFirst => (&row.food, &row.animal),
            FoodOrder::FoodSecond => (&row.animal, &row.food),
        };
        let mut c = Composer::default();
        c.push(art.article_cap(first)).push(" ").push(first).push(" and ");
        c.push(art.article(second)).push(" ");
        let span = c.mark(second);
        let mut rec = record(
            format!("food-{}-{}", slug(&row.food), slug(&row.animal)),
            c.finish(),
            vec![span],
            Variant::Orig,
        );
        rec.labels.insert("eats".into(), f64::from(eats));
        rec.groups.insert("animal_class".into(), row.animal_class.clone());
        rec.groups.insert("food".into(), slug(&row.food));
        rec.groups.insert("animal".into(), slug(&row.animal));
        examples.push(rec);
    }
    let (experiment, name) = match order {
        FoodOrder::FoodFirst => (Experiment::FoodFirst, "food_first"),
        FoodOrder::FoodSecond => (Experiment::FoodSecond, "food_second"),
    };
    finish(experiment, name, examples)
}

/// Orders of (A, B, C, D) that keep the analogy valid: AB:CD, BA:DC, CD:AB, DC:BA.
const VALID_ORDERS: [[usize; 4]; 4] = [[0, 1, 2, 3], [1, 0, 3, 2], [2, 3, 0, 1], [3, 2, 1, 0]];

/// Swaps the second and fourth content words.
type Permutation = fn([usize; 4]) -> [usize; 4];

fn easy_invalid(order: [usize; 4]) -> [usize; 4] {
    [order[0], order[3], order[2], order[1]]
}

/// Swaps the third and fourth content words.
fn hard_invalid(order: [usize; 4]) -> [usize; 4] {
    [order[0], order[1], order[3], order[2]]
}

/// "Like a seed and a tree, an egg and a chicken" plus its valid
/// permutations and the easy/hard invalid counterparts of each.
pub fn build_analogy_manifest(ing: &Ingredients) -> Result<Manifest, DesignError> {
    if ing.analogies.is_empty() {
        return Err(DesignError::EmptyTable("analogies"));
    }
    let art = &ing.articles;
    let mut examples = Vec::with_capacity(12 * ing.analogies.len());
    for (q, analogy) in ing.analogies.iter().enumerate() {
        let terms = analogy.terms();
        let distinct: BTreeSet<String> = terms.iter().map(|t| t.trim().to_lowercase()).collect();
        if distinct.len() != 4 || terms.iter().any(|t| t.trim().is_empty()) {
            return Err(DesignError::DuplicateTerm { index: q, terms });
        }
        let analogy_id = format!("analogy{q:03}");
        let kinds: [(Variant, &str, Permutation); 3] = [
            (Variant::Valid, "valid", |o| o),
            (Variant::EasyInvalid, "easy", easy_invalid),
            (Variant::HardInvalid, "hard", hard_invalid),
        ];
        for (variant, tag, permute) in kinds {
            for (p, base) in VALID_ORDERS.iter().enumerate() {
                let words = permute(*base).map(|k| terms[k].as_str());
                let mut c = Composer::default();
                let mut spans = Vec::with_capacity(4);
                c.push("Like ");
                for (slot, word) in words.iter().enumerate() {
                    match slot {
                        1 | 3 => {
                            c.push(" and ");
                        }
                        2 => {
                            c.push(", ");
                        }
                        _ => {}
                    }
                    c.push(art.article(word)).push(" ");
                    spans.push(c.mark(word));
                }
                let mut rec = record(format!("{analogy_id}-{tag}{p}"), c.finish(), vec![spans[1]], variant);
                rec.extra_spans.insert("all_items".into(), spans);
                let valid = if variant == Variant::Valid { 1.0 } else { 0.0 };
                rec.labels.insert("valid".into(), valid);
                rec.groups.insert("analogy".into(), analogy_id.clone());
                examples.push(rec);
            }
        }
    }
    finish(Experiment::Analogies, "analogy", examples)
}
