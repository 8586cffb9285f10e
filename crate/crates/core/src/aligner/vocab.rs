use rustc_hash::FxHashMap;

pub const NULL_ID: u32 = 0;
pub const NULL_TOKEN: &str = "<null>";

/// Bijective token ↔ id map. Id 0 is reserved for the NULL word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: FxHashMap<String, u32>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary {
            words: vec![NULL_TOKEN.to_string()],
            index: FxHashMap::default(),
        }
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, word: &str) -> u32 {
        if let Some(&id) = self.index.get(word) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(word.to_string());
        self.index.insert(word.to_string(), id);
        id
    }

    pub fn get(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    /// Number of ids, including the NULL id.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() == 1
    }

    /// Non-NULL words in id order.
    pub fn words(&self) -> &[String] {
        &self.words[1..]
    }
}
