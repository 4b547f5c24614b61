// SPDX-License-Identifier: MIT OR Apache-2.0

use std::collections::BTreeMap;

use super::DesignError;

const BUILTIN_EXCEPTIONS: &str = include_str!("../../data/article_exceptions.csv");

/// Chooses "a" or "an" from the spelling of the following word.
///
/// Vowel-initial words take "an"; the exception table overrides by the
/// lowercased first word (e.g. "hour" -> "an", "unicorn" -> "a").
#[derive(Debug, Clone, PartialEq)]
pub struct ArticleRule {
    exceptions: BTreeMap<String, &'static str>,
}

impl Default for ArticleRule {
    fn default() -> Self {
        let mut rule = Self {
            exceptions: BTreeMap::new(),
        };
        rule.extend_from_csv(BUILTIN_EXCEPTIONS, "article_exceptions.csv")
            .expect("bundled exception table parses");
        rule
    }
}

impl ArticleRule {
    /// Adds or overrides exceptions from a `word,article` CSV.
    pub fn extend_from_csv(&mut self, csv_text: &str, name: &str) -> Result<(), DesignError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(csv_text.as_bytes());
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|source| DesignError::Csv {
                file: name.to_string(),
                source,
            })?;
            let word = rec.get(0).unwrap_or_default().to_lowercase();
            let article = match rec.get(1).map(str::to_lowercase).as_deref() {
                Some("a") => "a",
                Some("an") => "an",
                other => {
                    return Err(DesignError::BadRow {
                        table: "articles",
                        row: i + 1,
                        msg: format!("article must be a or an, got {other:?}"),
                    })
                }
            };
            if word.is_empty() {
                return Err(DesignError::BadRow {
                    table: "articles",
                    row: i + 1,
                    msg: "empty word".into(),
                });
            }
            self.exceptions.insert(word, article);
        }
        Ok(())
    }

    /// Lowercase article for `phrase` (decided by its first word).
    pub fn article(&self, phrase: &str) -> &'static str {
        let first = phrase.split_whitespace().next().unwrap_or_default().to_lowercase();
        if let Some(a) = self.exceptions.get(&first) {
            return a;
        }
        match first.chars().next() {
            Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
            _ => "a",
        }
    }

    /// Capitalized article, for sentence-initial use.
    pub fn article_cap(&self, phrase: &str) -> &'static str {
        match self.article(phrase) {
            "an" => "An",
            _ => "A",
        }
    }
}
