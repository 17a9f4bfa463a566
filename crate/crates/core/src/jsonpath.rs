//! Dotted paths into JSON values (`choices.0.message.content`).
//!
//! Numeric segments index arrays. `set` creates missing objects along the way
//! and extends arrays with nulls when indexing past the end.

use serde_json::{Map, Value};

pub fn get<'a>(value: &'a Value, path: &str) -> Option<&'a Value> {
    if path.is_empty() {
        return Some(value);
    }
    path.split('.').try_fold(value, |cur, seg| match cur {
        Value::Object(map) => map.get(seg),
        Value::Array(items) => seg.parse::<usize>().ok().and_then(|i| items.get(i)),
        _ => None,
    })
}

pub fn set(root: &mut Value, path: &str, new: Value) -> Result<(), String> {
    if path.is_empty() {
        *root = new;
        return Ok(());
    }
    let mut cur = root;
    for seg in path.split('.') {
        if cur.is_null() {
            *cur = match seg.parse::<usize>() {
                Ok(_) => Value::Array(Vec::new()),
                Err(_) => Value::Object(Map::new()),
            };
        }
        cur = match cur {
            Value::Object(map) => map.entry(seg.to_string()).or_insert(Value::Null),
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| format!("segment '{seg}' of '{path}' indexes an array"))?;
                if items.len() <= idx {
                    items.resize(idx + 1, Value::Null);
                }
                &mut items[idx]
            }
            _ => return Err(format!("cannot descend into scalar at '{seg}' of '{path}'")),
        };
    }
    *cur = new;
    Ok(())
}
