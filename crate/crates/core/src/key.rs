//! Key layout, parsing and parameter derivation.
//!
//! A key is a single `X`-bit integer split, most significant bits first, into
//! four fields: the initial corpus address, the graph radius, the dimension
//! selector and the initialization seed.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::Rng;
use thiserror::Error;

/// Upper bound on the seed field width; the seed space is capped at the hash space.
pub const MAX_SEED_BITS: u32 = 256;

const MAGIC: &str = "TEDL-KEY v1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("invalid key layout: {0}")]
    InvalidLayout(String),
    #[error("key payload has wrong length: expected {expected} bits, got {actual}")]
    LengthMismatch { expected: u32, actual: u32 },
    #[error("invalid hex in key payload")]
    InvalidHex,
    #[error("field {field} does not fit in {width} bits")]
    FieldOverflow { field: &'static str, width: u32 },
    #[error("malformed key file: {0}")]
    MalformedFile(String),
}

/// Bit widths of the four key fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeyLayout {
    pub x1: u32,
    pub x2: u32,
    pub x3: u32,
    pub x4: u32,
}

impl KeyLayout {
    /// The default 296-bit layout: 30-bit addresses, 2-bit radius, 8-bit dimension selector, 256-bit seed.
    pub const DEFAULT: KeyLayout = KeyLayout {
        x1: 30,
        x2: 2,
        x3: 8,
        x4: 256,
    };

    pub fn new(x1: u32, x2: u32, x3: u32, x4: u32) -> Result<Self, KeyError> {
        let layout = KeyLayout { x1, x2, x3, x4 };
        layout.validate()?;
        Ok(layout)
    }

    fn validate(&self) -> Result<(), KeyError> {
        let widths = [self.x1, self.x2, self.x3, self.x4];
        if widths.contains(&0) {
            return Err(KeyError::InvalidLayout("all widths must be at least 1".into()));
        }
        // Address and radius are carried as u64; the dimension selector must
        // leave room for D = 10 + 5 * N3 in a u64.
        if self.x1 > 64 || self.x2 > 64 {
            return Err(KeyError::InvalidLayout("x1 and x2 must be at most 64".into()));
        }
        if self.x3 > 32 {
            return Err(KeyError::InvalidLayout("x3 must be at most 32".into()));
        }
        if self.x4 > MAX_SEED_BITS {
            return Err(KeyError::InvalidLayout(format!(
                "x4 must be at most {MAX_SEED_BITS}"
            )));
        }
        Ok(())
    }

    /// Total key length `X` in bits.
    pub fn total_bits(&self) -> u32 {
        self.x1 + self.x2 + self.x3 + self.x4
    }

    /// Number of hex digits in the text encoding.
    pub fn hex_digits(&self) -> usize {
        self.total_bits().div_ceil(4) as usize
    }
}

impl Default for KeyLayout {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl fmt::Display for KeyLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.x1, self.x2, self.x3, self.x4)
    }
}

impl FromStr for KeyLayout {
    type Err = KeyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(',').collect();
        if parts.len() != 4 {
            return Err(KeyError::InvalidLayout(format!(
                "expected four comma-separated widths, got {s:?}"
            )));
        }
        let mut w = [0u32; 4];
        for (slot, part) in w.iter_mut().zip(&parts) {
            *slot = part
                .trim()
                .parse()
                .map_err(|_| KeyError::InvalidLayout(format!("bad width {part:?}")))?;
        }
        KeyLayout::new(w[0], w[1], w[2], w[3])
    }
}

/// A 256-bit unsigned seed, stored big-endian.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Seed(pub [u8; 32]);

impl Seed {
    pub fn from_u64(v: u64) -> Self {
        let mut b = [0u8; 32];
        b[24..].copy_from_slice(&v.to_be_bytes());
        Seed(b)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    fn to_biguint(self) -> BigUint {
        BigUint::from_bytes_be(&self.0)
    }

    fn from_biguint(v: &BigUint) -> Self {
        let bytes = v.to_bytes_be();
        assert!(bytes.len() <= 32, "seed wider than 256 bits");
        let mut b = [0u8; 32];
        b[32 - bytes.len()..].copy_from_slice(&bytes);
        Seed(b)
    }

    /// Decimal rendering, as mixed into the per-word initialization hash.
    pub fn to_decimal(&self) -> String {
        self.to_biguint().to_str_radix(10)
    }

    /// Number of significant bits (0 for zero).
    pub fn bits(&self) -> u32 {
        self.to_biguint().bits() as u32
    }
}

impl fmt::Debug for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Seed({})", self.to_decimal())
    }
}

impl fmt::Display for Seed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal())
    }
}

/// The four key fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Key {
    /// Initial corpus address.
    pub n1: u64,
    /// Graph radius.
    pub n2: u64,
    /// Dimension selector.
    pub n3: u64,
    /// Initialization seed.
    pub n4: Seed,
}

fn fits(v: u64, width: u32) -> bool {
    width >= 64 || v >> width == 0
}

impl Key {
    /// Checks every field against its declared width.
    pub fn validate(&self, layout: &KeyLayout) -> Result<(), KeyError> {
        layout.validate()?;
        for (field, v, width) in [
            ("n1", self.n1, layout.x1),
            ("n2", self.n2, layout.x2),
            ("n3", self.n3, layout.x3),
        ] {
            if !fits(v, width) {
                return Err(KeyError::FieldOverflow { field, width });
            }
        }
        if self.n4.bits() > layout.x4 {
            return Err(KeyError::FieldOverflow {
                field: "n4",
                width: layout.x4,
            });
        }
        Ok(())
    }

    /// Draws every field uniformly from its width.
    pub fn random<R: Rng + ?Sized>(layout: &KeyLayout, rng: &mut R) -> Self {
        fn draw<R: Rng + ?Sized>(rng: &mut R, width: u32) -> u64 {
            let v: u64 = rng.random();
            if width >= 64 {
                v
            } else {
                v & ((1u64 << width) - 1)
            }
        }
        let mut seed = [0u8; 32];
        rng.fill(&mut seed);
        let excess = MAX_SEED_BITS - layout.x4;
        let mut seed_val = BigUint::from_bytes_be(&seed);
        seed_val >>= excess as usize;
        Key {
            n1: draw(rng, layout.x1),
            n2: draw(rng, layout.x2),
            n3: draw(rng, layout.x3),
            n4: Seed::from_biguint(&seed_val),
        }
    }
}

/// Parameters derived from a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DerivedParams {
    pub r: u64,
    pub d: usize,
    pub d_prime: usize,
    pub loop_len: usize,
    pub seed: Seed,
}

pub fn derive_params(key: &Key) -> DerivedParams {
    let n3 = key.n3 as usize;
    let d = 10 + 5 * n3;
    DerivedParams {
        r: key.n2,
        d,
        d_prime: d / 5,
        loop_len: d / 5 - 1,
        seed: key.n4,
    }
}

/// Decodes an uppercase (or lowercase) hex payload into key fields,
/// most significant field first.
pub fn parse_key(encoded: &str, layout: &KeyLayout) -> Result<Key, KeyError> {
    layout.validate()?;
    let encoded = encoded.trim();
    let total = layout.total_bits();
    let digits = encoded.len();
    if digits != layout.hex_digits() {
        return Err(KeyError::LengthMismatch {
            expected: total,
            actual: (digits * 4) as u32,
        });
    }
    let value = BigUint::parse_bytes(encoded.as_bytes(), 16).ok_or(KeyError::InvalidHex)?;
    if value.bits() > total as u64 {
        // Pad bits above X are set: the payload carries more than X bits.
        return Err(KeyError::LengthMismatch {
            expected: total,
            actual: value.bits() as u32,
        });
    }
    let mask = |width: u32| (BigUint::from(1u8) << width as usize) - 1u8;
    let to_u64 = |v: BigUint| -> u64 {
        let digits = v.to_u64_digits();
        digits.first().copied().unwrap_or(0)
    };
    let n4 = &value & mask(layout.x4);
    let rest = &value >> layout.x4 as usize;
    let n3 = &rest & mask(layout.x3);
    let rest = rest >> layout.x3 as usize;
    let n2 = &rest & mask(layout.x2);
    let n1 = rest >> layout.x2 as usize;
    Ok(Key {
        n1: to_u64(n1),
        n2: to_u64(n2),
        n3: to_u64(n3),
        n4: Seed::from_biguint(&n4),
    })
}

/// Encodes a key as uppercase hex, left-padded to `ceil(X / 4)` digits.
pub fn serialize_key(key: &Key, layout: &KeyLayout) -> Result<String, KeyError> {
    key.validate(layout)?;
    let mut value = BigUint::from(key.n1);
    value = (value << layout.x2 as usize) | BigUint::from(key.n2);
    value = (value << layout.x3 as usize) | BigUint::from(key.n3);
    value = (value << layout.x4 as usize) | key.n4.to_biguint();
    let hex = value.to_str_radix(16).to_uppercase();
    Ok(format!("{hex:0>width$}", width = layout.hex_digits()))
}

/// Key file contents: a header line carrying the layout, then the hex payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyFile {
    pub layout: KeyLayout,
    pub key: Key,
}

impl KeyFile {
    pub fn to_text(&self) -> Result<String, KeyError> {
        Ok(format!(
            "{MAGIC} {}\n{}\n",
            self.layout,
            serialize_key(&self.key, &self.layout)?
        ))
    }

    pub fn parse(text: &str) -> Result<Self, KeyError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| KeyError::MalformedFile("empty file".into()))?;
        let layout = header
            .strip_prefix(MAGIC)
            .ok_or_else(|| KeyError::MalformedFile(format!("bad header {header:?}")))?
            .trim()
            .parse::<KeyLayout>()?;
        let payload = lines
            .next()
            .ok_or_else(|| KeyError::MalformedFile("missing payload line".into()))?;
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(KeyError::MalformedFile("trailing content".into()));
        }
        let key = parse_key(payload, &layout)?;
        Ok(KeyFile { layout, key })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_layout_is_296_bits() {
        assert_eq!(KeyLayout::DEFAULT.total_bits(), 296);
        assert_eq!(KeyLayout::DEFAULT.hex_digits(), 74);
        let key = parse_key(&"0".repeat(74), &KeyLayout::DEFAULT).unwrap();
        assert_eq!(
            key,
            Key {
                n1: 0,
                n2: 0,
                n3: 0,
                n4: Seed::default()
            }
        );
    }

    #[test]
    fn wrong_lengths_are_rejected() {
        let layout = KeyLayout::DEFAULT;
        assert!(matches!(
            parse_key(&"0".repeat(73), &layout),
            Err(KeyError::LengthMismatch { .. })
        ));
        assert!(matches!(
            parse_key(&"0".repeat(75), &layout),
            Err(KeyError::LengthMismatch { .. })
        ));
        // 13 bits -> 4 hex digits; the top three pad bits must stay clear.
        let small = KeyLayout::new(4, 2, 3, 4).unwrap();
        assert!(parse_key("1FFF", &small).is_ok());
        assert!(matches!(
            parse_key("2000", &small),
            Err(KeyError::LengthMismatch { .. })
        ));
        assert_eq!(parse_key("zz00", &small), Err(KeyError::InvalidHex));
    }

    #[test]
    fn layout_validation() {
        assert!("30,2,8,256".parse::<KeyLayout>().is_ok());
        assert!("30,2,8".parse::<KeyLayout>().is_err());
        assert!("0,2,8,256".parse::<KeyLayout>().is_err());
        assert!("30,2,8,257".parse::<KeyLayout>().is_err());
        assert!("a,2,8,256".parse::<KeyLayout>().is_err());
    }

    #[test]
    fn derived_params() {
        let mut key = Key {
            n1: 0,
            n2: 0b10,
            n3: 38,
            n4: Seed::from_u64(1),
        };
        let p = derive_params(&key);
        assert_eq!((p.d, p.d_prime, p.loop_len, p.r), (200, 40, 39, 2));
        key.n3 = 0;
        let p = derive_params(&key);
        assert_eq!((p.d, p.d_prime, p.loop_len), (10, 2, 1));
    }

    #[test]
    fn dimension_identities_hold_for_every_selector() {
        for n3 in 0..256u64 {
            let p = derive_params(&Key {
                n1: 0,
                n2: 0,
                n3,
                n4: Seed::default(),
            });
            assert_eq!(p.d % 5, 0);
            assert_eq!(p.d_prime * 5, p.d);
            assert_eq!(p.loop_len + 1, p.d_prime);
        }
    }

    #[test]
    fn max_value_roundtrip() {
        let layout = KeyLayout::DEFAULT;
        let key = Key {
            n1: (1 << 30) - 1,
            n2: 3,
            n3: 255,
            n4: Seed([0xFF; 32]),
        };
        let hex = serialize_key(&key, &layout).unwrap();
        assert_eq!(hex, "F".repeat(74));
        assert_eq!(parse_key(&hex, &layout).unwrap(), key);
    }

    #[test]
    fn overflowing_fields_are_rejected() {
        let layout = KeyLayout::new(4, 2, 3, 4).unwrap();
        let key = Key {
            n1: 16,
            n2: 0,
            n3: 0,
            n4: Seed::default(),
        };
        assert!(matches!(
            serialize_key(&key, &layout),
            Err(KeyError::FieldOverflow { field: "n1", .. })
        ));
        let key = Key {
            n1: 0,
            n2: 0,
            n3: 0,
            n4: Seed::from_u64(16),
        };
        assert!(matches!(
            serialize_key(&key, &layout),
            Err(KeyError::FieldOverflow { field: "n4", .. })
        ));
    }

    #[test]
    fn seed_decimal() {
        assert_eq!(Seed::from_u64(1).to_decimal(), "1");
        assert_eq!(Seed::default().to_decimal(), "0");
        assert_eq!(
            Seed([0xFF; 32]).to_decimal(),
            "115792089237316195423570985008687907853269984665640564039457584007913129639935"
        );
    }

    #[test]
    fn key_file_roundtrip_and_errors() {
        let kf = KeyFile {
            layout: KeyLayout::new(8, 2, 4, 16).unwrap(),
            key: Key {
                n1: 200,
                n2: 1,
                n3: 3,
                n4: Seed::from_u64(0xBEEF),
            },
        };
        let text = kf.to_text().unwrap();
        assert!(text.starts_with("TEDL-KEY v1 8,2,4,16\n"));
        assert_eq!(KeyFile::parse(&text).unwrap(), kf);
        assert!(KeyFile::parse("TEDL-KEY v2 8,2,4,16\n00\n").is_err());
        assert!(KeyFile::parse("TEDL-KEY v1 8,2,4,16\n").is_err());
    }

    fn arb_key(layout: KeyLayout) -> impl Strategy<Value = Key> {
        let mask = |w: u32| if w >= 64 { u64::MAX } else { (1u64 << w) - 1 };
        (
            any::<u64>(),
            any::<u64>(),
            any::<u64>(),
            any::<[u8; 32]>(),
        )
            .prop_map(move |(a, b, c, mut s)| {
                let drop = (MAX_SEED_BITS - layout.x4) as usize;
                for bit in 0..drop {
                    s[bit / 8] &= !(0x80 >> (bit % 8));
                }
                Key {
                    n1: a & mask(layout.x1),
                    n2: b & mask(layout.x2),
                    n3: c & mask(layout.x3),
                    n4: Seed(s),
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn serialize_parse_roundtrip(key in arb_key(KeyLayout::DEFAULT)) {
            let layout = KeyLayout::DEFAULT;
            let hex = serialize_key(&key, &layout).unwrap();
            prop_assert_eq!(hex.len(), 74);
            prop_assert_eq!(parse_key(&hex, &layout).unwrap(), key);
            prop_assert_eq!(derive_params(&key), derive_params(&key));
        }

        #[test]
        fn odd_layout_roundtrip(key in arb_key(KeyLayout { x1: 3, x2: 5, x3: 7, x4: 11 })) {
            let layout = KeyLayout::new(3, 5, 7, 11).unwrap();
            let hex = serialize_key(&key, &layout).unwrap();
            prop_assert_eq!(parse_key(&hex, &layout).unwrap(), key);
        }
    }
}
