//! Text-to-SQL dataset releases in JSON form and their train/valid/test splits.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde_json::Value;

use super::{Corpus, QuerySeq, Role, Token};
use crate::error::{Error, Result};
use crate::sqlast::tokenize_sql;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Variable {
    pub name: String,
    pub var_type: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub text: String,
    pub split_key: String,
    /// Placeholder name to entity value.
    pub bindings: BTreeMap<String, String>,
}

/// One dataset entry: equivalent SQL templates and the questions that map to them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetRecord {
    pub sql_templates: Vec<String>,
    pub sentences: Vec<Sentence>,
    pub query_split_key: String,
    pub variables: Vec<Variable>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMode {
    /// Each (question, sql) instance goes where its question's split key says.
    Question,
    /// Every instance of a record goes where the record's split key says.
    Query,
}

/// Maps split-key strings to corpus roles.
///
/// `train`, `valid`, `dev` and `test` are always understood. Numeric fold ids
/// used by some releases must be mapped explicitly with [`SplitResolver::with_fold`].
#[derive(Clone, Debug, Default)]
pub struct SplitResolver {
    folds: BTreeMap<String, Role>,
}

impl SplitResolver {
    pub fn with_fold(mut self, key: impl Into<String>, role: Role) -> Self {
        self.folds.insert(key.into(), role);
        self
    }

    pub fn resolve(&self, key: &str) -> Option<Role> {
        match key {
            "train" => Some(Role::Train),
            "valid" | "dev" => Some(Role::Valid),
            "test" => Some(Role::Test),
            other => self.folds.get(other).copied(),
        }
    }
}

pub fn load_dataset_json(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset_json(&text)
}

/// Parses a JSON array of dataset records. Unknown fields are ignored.
pub fn parse_dataset_json(text: &str) -> Result<Vec<DatasetRecord>> {
    let value: Value = serde_json::from_str(text)?;
    let Value::Array(items) = value else {
        return Err(Error::Record {
            index: 0,
            message: "top level is not an array".into(),
        });
    };
    items
        .iter()
        .enumerate()
        .map(|(i, item)| parse_record(item).map_err(|message| Error::Record { index: i, message }))
        .collect()
}

fn field<'a>(obj: &'a serde_json::Map<String, Value>, name: &str) -> std::result::Result<&'a Value, String> {
    obj.get(name).ok_or_else(|| format!("missing {name}"))
}

// Split keys appear as strings in most releases and as bare fold numbers in some.
fn split_key(v: &Value, name: &str) -> std::result::Result<String, String> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        _ => Err(format!("{name} is not a string")),
    }
}

fn string(v: &Value, what: &str) -> std::result::Result<String, String> {
    v.as_str()
        .map(str::to_owned)
        .ok_or_else(|| format!("{what} is not a string"))
}

fn parse_record(item: &Value) -> std::result::Result<DatasetRecord, String> {
    let obj = item.as_object().ok_or("not an object")?;

    let sql_templates = field(obj, "sql")?
        .as_array()
        .ok_or("sql is not an array")?
        .iter()
        .map(|v| string(v, "sql entry"))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if sql_templates.is_empty() {
        return Err("empty sql".into());
    }

    let query_split_key = split_key(field(obj, "query-split")?, "query-split")?;

    let variables = field(obj, "variables")?
        .as_array()
        .ok_or("variables is not an array")?
        .iter()
        .map(|v| {
            let o = v.as_object().ok_or("variable is not an object")?;
            Ok(Variable {
                name: string(field(o, "name")?, "variable name")?,
                var_type: o
                    .get("type")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_owned(),
            })
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    let declared: BTreeSet<&str> = variables.iter().map(|v| v.name.as_str()).collect();

    let mut sentences = Vec::new();
    for (j, s) in field(obj, "sentences")?
        .as_array()
        .ok_or("sentences is not an array")?
        .iter()
        .enumerate()
    {
        let o = s
            .as_object()
            .ok_or_else(|| format!("sentence {j} is not an object"))?;
        let text = string(field(o, "text").map_err(|e| format!("sentence {j}: {e}"))?, "text")?;
        let key = split_key(
            field(o, "question-split").map_err(|e| format!("sentence {j}: {e}"))?,
            "question-split",
        )?;
        let mut bindings = BTreeMap::new();
        match o.get("variables") {
            None | Some(Value::Null) => {}
            Some(Value::Object(vars)) => {
                for (name, value) in vars {
                    if !declared.contains(name.as_str()) {
                        return Err(format!("sentence {j} binds undeclared variable {name}"));
                    }
                    let value = match value {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    bindings.insert(name.clone(), value);
                }
            }
            Some(_) => return Err(format!("sentence {j}: variables is not an object")),
        }
        sentences.push(Sentence {
            text,
            split_key: key,
            bindings,
        });
    }

    Ok(DatasetRecord {
        sql_templates,
        sentences,
        query_split_key,
        variables,
    })
}

/// Splits records into train, valid and test corpora.
///
/// Only the first SQL template of a record is used. With `anonymize` the
/// placeholders stay as tokens; otherwise each placeholder token is replaced by
/// the whitespace-split tokens of the sentence's binding.
pub fn build_split(
    records: &[DatasetRecord],
    mode: SplitMode,
    anonymize: bool,
    resolver: &SplitResolver,
) -> Result<(Corpus, Corpus, Corpus)> {
    let mut train = Corpus::empty(Role::Train);
    let mut valid = Corpus::empty(Role::Valid);
    let mut test = Corpus::empty(Role::Test);

    for (i, record) in records.iter().enumerate() {
        let template = tokenize_sql(&record.sql_templates[0]).map_err(|e| Error::Record {
            index: i,
            message: e.to_string(),
        })?;
        let record_role = match mode {
            SplitMode::Query => Some(resolve(resolver, i, &record.query_split_key)?),
            SplitMode::Question => None,
        };
        for (j, sentence) in record.sentences.iter().enumerate() {
            let role = match record_role {
                Some(role) => role,
                None => resolve(resolver, i, &sentence.split_key)?,
            };
            let tokens = if anonymize {
                template.clone()
            } else {
                substitute(&template, &sentence.bindings)
            };
            if tokens.is_empty() {
                return Err(Error::Record {
                    index: i,
                    message: format!("sentence {j} produces an empty query"),
                });
            }
            let query = QuerySeq::new(tokens, format!("{i}/{j}"));
            match role {
                Role::Train => train.queries.push(query),
                Role::Valid => valid.queries.push(query),
                Role::Test => test.queries.push(query),
            }
        }
    }
    Ok((train, valid, test))
}

fn resolve(resolver: &SplitResolver, record: usize, key: &str) -> Result<Role> {
    resolver.resolve(key).ok_or_else(|| Error::UnknownSplitKey {
        record,
        key: key.to_owned(),
    })
}

fn substitute(template: &[Token], bindings: &BTreeMap<String, String>) -> Vec<Token> {
    let mut out = Vec::with_capacity(template.len());
    for tok in template {
        match bindings.get(tok.as_str()) {
            Some(value) => out.extend(
                value
                    .split_whitespace()
                    .map(|v| Token::new_unchecked(v.to_owned())),
            ),
            None => out.push(tok.clone()),
        }
    }
    out
}
