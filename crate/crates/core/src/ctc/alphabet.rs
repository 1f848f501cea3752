use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use super::CtcError;

/// Ordered label characters. Class `i + 1` is `classes[i]`; class 0 is the
/// CTC blank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    classes: Vec<char>,
}

impl Alphabet {
    pub const BLANK: usize = 0;

    pub fn new(classes: Vec<char>) -> Result<Self, CtcError> {
        if classes.is_empty() {
            return Err(CtcError::EmptyAlphabet);
        }
        let mut seen = BTreeSet::new();
        for &c in &classes {
            if !seen.insert(c) {
                return Err(CtcError::DuplicateClass(c));
            }
            if c == '\n' || c == '\r' || c == '\t' {
                return Err(CtcError::InvalidAlphabetFile(format!(
                    "control character {c:?} cannot be a class"
                )));
            }
        }
        Ok(Alphabet { classes })
    }

    /// Sorted set of all characters occurring in `labels`.
    pub fn from_labels<'a, I: IntoIterator<Item = &'a str>>(labels: I) -> Result<Self, CtcError> {
        let set: BTreeSet<char> = labels.into_iter().flat_map(str::chars).collect();
        Alphabet::new(set.into_iter().collect())
    }

    /// Parses the alphabet file format: one character per line, line `n`
    /// (1-based) holding class `n`.
    pub fn parse(text: &str) -> Result<Self, CtcError> {
        let body = text.strip_suffix('\n').unwrap_or(text);
        let mut classes = Vec::new();
        for (i, line) in body.split('\n').enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            let mut chars = line.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => classes.push(c),
                _ => {
                    return Err(CtcError::InvalidAlphabetFile(format!(
                        "line {} must hold exactly one character, found {line:?}",
                        i + 1
                    )))
                }
            }
        }
        Alphabet::new(classes)
    }

    pub fn to_file_string(&self) -> String {
        self.classes.iter().map(|c| format!("{c}\n")).collect()
    }

    pub fn load(path: &Path) -> Result<Self, CtcError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CtcError::InvalidAlphabetFile(format!("{}: {e}", path.display())))?;
        Alphabet::parse(&text)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_file_string())
    }

    pub fn classes(&self) -> &[char] {
        &self.classes
    }

    /// Number of label characters, excluding the blank.
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Width of a logit row: characters plus the blank.
    pub fn num_classes(&self) -> usize {
        self.classes.len() + 1
    }

    pub fn index_of(&self, c: char) -> Option<usize> {
        self.classes.iter().position(|&x| x == c).map(|i| i + 1)
    }

    /// Characters of `label` missing from the alphabet, in first-seen order.
    pub fn missing(&self, label: &str) -> Vec<char> {
        let mut out = Vec::new();
        for c in label.chars() {
            if self.index_of(c).is_none() && !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }

    pub fn encode(&self, label: &str) -> Result<Vec<usize>, CtcError> {
        let missing = self.missing(label);
        if !missing.is_empty() {
            return Err(CtcError::MissingCharacters(missing));
        }
        Ok(label.chars().filter_map(|c| self.index_of(c)).collect())
    }

    /// Maps class indices back to text; the blank and unknown indices are
    /// skipped.
    pub fn decode(&self, indices: &[usize]) -> String {
        indices
            .iter()
            .filter(|&&i| i != Self::BLANK)
            .filter_map(|&i| self.classes.get(i - 1))
            .collect()
    }

    pub fn contains_all(&self, other: &Alphabet) -> Result<(), CtcError> {
        let missing: Vec<char> = other
            .classes
            .iter()
            .copied()
            .filter(|&c| self.index_of(c).is_none())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(CtcError::MissingCharacters(missing))
        }
    }
}

impl fmt::Display for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.classes {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip_with_space_class() {
        let a = Alphabet::new(vec!['\u{0628}', ' ', '\u{0627}']).unwrap();
        let text = a.to_file_string();
        assert_eq!(Alphabet::parse(&text).unwrap(), a);
        assert_eq!(a.index_of(' '), Some(2));
    }

    #[test]
    fn encode_decode() {
        let a = Alphabet::new(vec!['a', 'b']).unwrap();
        assert_eq!(a.encode("abba").unwrap(), vec![1, 2, 2, 1]);
        assert_eq!(a.decode(&[1, 0, 2]), "ab");
        assert_eq!(
            a.encode("axbyx").unwrap_err(),
            CtcError::MissingCharacters(vec!['x', 'y'])
        );
    }

    #[test]
    fn invalid_files() {
        assert!(Alphabet::parse("a\n\nb\n").is_err());
        assert!(Alphabet::parse("ab\n").is_err());
        assert!(Alphabet::parse("a\na\n").is_err());
        assert!(Alphabet::parse("").is_err());
    }
}
