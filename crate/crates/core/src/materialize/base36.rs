//! Base36 resource identifiers and the dictionary that assigns them.

use std::collections::HashMap;

const DIGITS: &[u8; 36] = b"0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";

pub fn encode_base36(mut n: u64) -> String {
    if n == 0 {
        return "0".into();
    }
    let mut buf = Vec::new();
    while n > 0 {
        buf.push(DIGITS[(n % 36) as usize]);
        n /= 36;
    }
    buf.reverse();
    String::from_utf8(buf).expect("ascii digits")
}

/// Inverse of [`encode_base36`]; accepts upper- or lower-case digits.
pub fn decode_base36(text: &str) -> Option<u64> {
    if text.is_empty() {
        return None;
    }
    let mut n: u64 = 0;
    for c in text.chars() {
        let d = c.to_digit(36)? as u64;
        n = n.checked_mul(36)?.checked_add(d)?;
    }
    Some(n)
}

/// Bijective map from resource text to a dense integer id.
#[derive(Debug, Default, Clone)]
pub struct ResourceDictionary {
    ids: HashMap<String, u64>,
    resources: Vec<String>,
}

impl ResourceDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn id(&mut self, resource: &str) -> u64 {
        if let Some(&id) = self.ids.get(resource) {
            return id;
        }
        let id = self.resources.len() as u64;
        self.ids.insert(resource.to_string(), id);
        self.resources.push(resource.to_string());
        id
    }

    pub fn encode(&mut self, resource: &str) -> String {
        encode_base36(self.id(resource))
    }

    pub fn decode(&self, code: &str) -> Option<&str> {
        let id = decode_base36(code)?;
        self.resources.get(id as usize).map(String::as_str)
    }

    pub fn next_id(&self) -> u64 {
        self.resources.len() as u64
    }

    pub fn len(&self) -> usize {
        self.resources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resources.is_empty()
    }
}
