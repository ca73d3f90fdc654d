use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{CognateSet, CorpusError, Dataset, Language, Symbol, Word};

pub const VOCAB_FORMAT: &str = "protolens-vocab/1";

/// Reserved ids at the start of every vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpecialToken {
    Pad = 0,
    Bos = 1,
    Eos = 2,
    Sep = 3,
    Missing = 4,
    Unk = 5,
}

impl SpecialToken {
    pub const ALL: [SpecialToken; 6] = [
        SpecialToken::Pad,
        SpecialToken::Bos,
        SpecialToken::Eos,
        SpecialToken::Sep,
        SpecialToken::Missing,
        SpecialToken::Unk,
    ];

    pub const fn id(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SpecialToken::Pad => "<pad>",
            SpecialToken::Bos => "<bos>",
            SpecialToken::Eos => "<eos>",
            SpecialToken::Sep => "<sep>",
            SpecialToken::Missing => "<missing>",
            SpecialToken::Unk => "<unk>",
        }
    }
}

const N_SPECIAL: usize = SpecialToken::ALL.len();

/// Symbol table shared by every language, Latin included.
///
/// Besides the id mapping it records which symbols were attested in which
/// language, so that per-language analyses can be run from a checkpoint alone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<Symbol>,
    ids: HashMap<Symbol, usize>,
    inventory: BTreeMap<Language, BTreeSet<Symbol>>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    format: String,
    specials: BTreeMap<String, usize>,
    symbols: BTreeMap<String, usize>,
    inventory: BTreeMap<Language, Vec<Symbol>>,
}

impl Vocabulary {
    /// Ids are assigned in first-occurrence order, scanning each set's
    /// daughters in canonical order and then its Latin word.
    pub fn build(ds: &Dataset) -> Vocabulary {
        Vocabulary::from_sets(&ds.sets)
    }

    pub fn from_sets(sets: &[CognateSet]) -> Vocabulary {
        let mut vocab = Vocabulary {
            symbols: Vec::new(),
            ids: HashMap::new(),
            inventory: BTreeMap::new(),
        };
        for set in sets {
            for (lang, word) in set.daughters() {
                if let Some(word) = word {
                    vocab.observe(lang, word);
                }
            }
            vocab.observe(Language::Latin, set.latin());
        }
        vocab
    }

    fn observe(&mut self, lang: Language, word: &Word) {
        for &s in word.symbols() {
            if !self.ids.contains_key(&s) {
                self.ids.insert(s, N_SPECIAL + self.symbols.len());
                self.symbols.push(s);
            }
            self.inventory.entry(lang).or_default().insert(s);
        }
    }

    /// Total number of ids, specials included.
    pub fn len(&self) -> usize {
        N_SPECIAL + self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_special(&self) -> usize {
        N_SPECIAL
    }

    pub fn id(&self, symbol: Symbol) -> Option<usize> {
        self.ids.get(&symbol).copied()
    }

    /// The content symbol behind `id`, or `None` for specials and out-of-range ids.
    pub fn symbol(&self, id: usize) -> Option<Symbol> {
        id.checked_sub(N_SPECIAL)
            .and_then(|i| self.symbols.get(i).copied())
    }

    pub fn is_content(&self, id: usize) -> bool {
        id >= N_SPECIAL && id < self.len()
    }

    pub fn content_symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    /// Symbols attested in `lang`, in id order.
    pub fn attested(&self, lang: Language) -> Vec<Symbol> {
        let mut out: Vec<Symbol> = self
            .inventory
            .get(&lang)
            .map(|s| s.iter().copied().collect())
            .unwrap_or_default();
        out.sort_by_key(|s| self.ids[s]);
        out
    }

    /// Human-readable token for any id, specials included.
    pub fn token(&self, id: usize) -> String {
        match self.symbol(id) {
            Some(s) => s.to_string(),
            None => SpecialToken::ALL
                .get(id)
                .map_or_else(|| format!("<{id}?>"), |t| t.name().to_string()),
        }
    }

    fn word_ids(&self, word: &Word, lossy: bool) -> Result<Vec<usize>, CorpusError> {
        word.symbols()
            .iter()
            .map(|&s| match self.id(s) {
                Some(id) => Ok(id),
                None if lossy => Ok(SpecialToken::Unk.id()),
                None => Err(CorpusError::OutOfVocabulary(s)),
            })
            .collect()
    }

    fn encode_inner(&self, set: &CognateSet, lossy: bool) -> Result<EncodedExample, CorpusError> {
        let mut input_ids = Vec::new();
        let mut input_langs = Vec::new();
        for (i, (lang, word)) in set.daughters().enumerate() {
            if i > 0 {
                // a separator belongs to the daughter it closes
                input_ids.push(SpecialToken::Sep.id());
                input_langs.push(Language::DAUGHTERS[i - 1]);
            }
            match word {
                Some(w) => {
                    let ids = self.word_ids(w, lossy)?;
                    input_langs.extend(std::iter::repeat_n(lang, ids.len()));
                    input_ids.extend(ids);
                }
                None => {
                    input_ids.push(SpecialToken::Missing.id());
                    input_langs.push(lang);
                }
            }
        }
        let mut target_ids = self.word_ids(set.latin(), lossy)?;
        target_ids.push(SpecialToken::Eos.id());
        Ok(EncodedExample {
            input_ids,
            input_langs,
            target_ids,
        })
    }

    /// Encodes a cognate set; any symbol missing from the vocabulary is an error.
    pub fn encode(&self, set: &CognateSet) -> Result<EncodedExample, CorpusError> {
        self.encode_inner(set, false)
    }

    /// Like [`Vocabulary::encode`] but maps unseen symbols to `<unk>`.
    pub fn encode_lossy(&self, set: &CognateSet) -> EncodedExample {
        self.encode_inner(set, true)
            .expect("lossy encoding cannot fail")
    }

    /// Turns decoder output ids back into a word, dropping special ids.
    pub fn decode(&self, ids: &[usize]) -> Option<Word> {
        let symbols: Vec<Symbol> = ids.iter().filter_map(|&id| self.symbol(id)).collect();
        Word::new(symbols).ok()
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            format: VOCAB_FORMAT.to_string(),
            specials: SpecialToken::ALL
                .iter()
                .map(|t| (t.name().to_string(), t.id()))
                .collect(),
            symbols: self
                .symbols
                .iter()
                .enumerate()
                .map(|(i, s)| (s.to_string(), i + N_SPECIAL))
                .collect(),
            inventory: self
                .inventory
                .keys()
                .map(|&l| (l, self.attested(l)))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Vocabulary, CorpusError> {
        let bad = |m: String| CorpusError::VocabFormat(m);
        let file: VocabFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if file.format != VOCAB_FORMAT {
            return Err(bad(format!("unsupported format {:?}", file.format)));
        }
        for t in SpecialToken::ALL {
            if file.specials.get(t.name()) != Some(&t.id()) {
                return Err(bad(format!("special token {} must have id {}", t.name(), t.id())));
            }
        }
        let mut slots: Vec<Option<Symbol>> = vec![None; file.symbols.len()];
        for (text, &id) in &file.symbols {
            let mut chars = text.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(bad(format!("symbol {text:?} is not a single scalar")));
            };
            let slot = id
                .checked_sub(N_SPECIAL)
                .and_then(|i| slots.get_mut(i))
                .ok_or_else(|| bad(format!("symbol id {id} out of range")))?;
            if slot.replace(Symbol(c)).is_some() {
                return Err(bad(format!("duplicate id {id}")));
            }
        }
        let symbols: Vec<Symbol> = slots.into_iter().map(|s| s.expect("ids are dense")).collect();
        let ids = symbols
            .iter()
            .enumerate()
            .map(|(i, &s)| (s, i + N_SPECIAL))
            .collect::<HashMap<_, _>>();
        let mut inventory = BTreeMap::new();
        for (lang, syms) in file.inventory {
            if let Some(s) = syms.iter().find(|s| !ids.contains_key(s)) {
                return Err(bad(format!("inventory symbol {s} not in vocabulary")));
            }
            inventory.insert(lang, syms.into_iter().collect());
        }
        Ok(Vocabulary {
            symbols,
            ids,
            inventory,
        })
    }
}

/// A cognate set as id streams ready for the encoder-decoder.
///
/// `input_ids` is the concatenation of the five daughters in canonical order
/// (a single `<missing>` for an absent one) joined by `<sep>`; `input_langs`
/// gives the language of every input position. `target_ids` is the Latin word
/// followed by `<eos>`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EncodedExample {
    pub input_ids: Vec<usize>,
    pub input_langs: Vec<Language>,
    pub target_ids: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_dataset, Mode};
    use std::collections::BTreeSet;

    fn ds(text: &str) -> Dataset {
        parse_dataset(text, Mode::Orthographic).unwrap()
    }

    #[test]
    fn minimal_vocabulary() {
        let v = Vocabulary::build(&ds("a\t-\t-\t-\t-\taa"));
        assert_eq!(v.len(), v.n_special() + 1);
        assert_eq!(v.id(Symbol('a')), Some(N_SPECIAL));
    }

    #[test]
    fn ids_round_trip() {
        let v = Vocabulary::build(&ds("lapte\tlait\tlatte\tleche\tleite\tlactem"));
        for id in v.n_special()..v.len() {
            assert_eq!(v.id(v.symbol(id).unwrap()), Some(id));
        }
        for t in SpecialToken::ALL {
            assert_eq!(v.symbol(t.id()), None);
        }
    }

    #[test]
    fn covers_union_of_observed_symbols() {
        let text = "lapte\tlait\tlatte\tleche\tleite\tlactem\n\
                    -\ttKavaj\t-\ttRabaxo\ttR5BaLu\ttrIpalEm\n\
                    Za\tZa\tdZa\txa\tZa\tja\n";
        let v = Vocabulary::build(&ds(text));
        let union: BTreeSet<char> = text
            .lines()
            .flat_map(|l| l.split('\t'))
            .filter(|c| *c != "-")
            .flat_map(str::chars)
            .collect();
        let got: BTreeSet<char> = v.content_symbols().iter().map(|s| s.0).collect();
        assert_eq!(got, union);
        assert_eq!(v.len(), union.len() + N_SPECIAL);
        // first occurrence order
        assert_eq!(v.symbol(N_SPECIAL), Some(Symbol('l')));
        assert_eq!(v.symbol(N_SPECIAL + 1), Some(Symbol('a')));
        assert!(v.attested(Language::Spanish).contains(&Symbol('x')));
        assert!(!v.attested(Language::Latin).contains(&Symbol('x')));
    }

    #[test]
    fn encodes_full_set() {
        let d = ds("lapte\tlait\tlatte\tleche\tleite\tlactem");
        let v = Vocabulary::build(&d);
        let ex = v.encode(&d.sets[0]).unwrap();
        assert_eq!(ex.input_ids.len(), 5 + 4 + 5 + 5 + 5 + 4);
        assert_eq!(ex.input_langs.len(), ex.input_ids.len());
        assert_eq!(ex.target_ids.len(), 7);
        assert_eq!(*ex.target_ids.last().unwrap(), SpecialToken::Eos.id());
        let seps: Vec<usize> = ex
            .input_ids
            .iter()
            .enumerate()
            .filter(|(_, &id)| id == SpecialToken::Sep.id())
            .map(|(i, _)| i)
            .collect();
        assert_eq!(seps, vec![5, 10, 16, 22]);
        assert_eq!(ex.input_langs[6], Language::French);
        assert_eq!(ex.input_langs[27], Language::Portuguese);
    }

    #[test]
    fn missing_daughter_becomes_token() {
        let d = ds("-\ttKavaj\t-\ttRabaxo\ttR5BaLu\ttrIpalEm");
        let v = Vocabulary::build(&d);
        let ex = v.encode(&d.sets[0]).unwrap();
        assert_eq!(&ex.input_ids[..2], &[SpecialToken::Missing.id(), SpecialToken::Sep.id()]);
        assert_eq!(ex.input_langs[0], Language::Romanian);
        // 1 + 6 + 1 + 7 + 7 content positions, 4 separators
        assert_eq!(ex.input_ids.len(), 1 + 6 + 1 + 7 + 7 + 4);
    }

    #[test]
    fn out_of_vocabulary() {
        let v = Vocabulary::build(&ds("a\t-\t-\t-\t-\taa"));
        let other = ds("b\t-\t-\t-\t-\ta");
        match v.encode(&other.sets[0]) {
            Err(CorpusError::OutOfVocabulary(Symbol('b'))) => {}
            r => panic!("unexpected {r:?}"),
        }
        let ex = v.encode_lossy(&other.sets[0]);
        assert_eq!(ex.input_ids[0], SpecialToken::Unk.id());
    }

    #[test]
    fn json_round_trip() {
        let v = Vocabulary::build(&ds("-\ttKavaj\t-\ttRabaxo\ttR5BaLu\ttrIpalEm"));
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back, v);
        assert!(Vocabulary::from_json(&v.to_json().replace(VOCAB_FORMAT, "protolens-vocab/0")).is_err());
    }
}
