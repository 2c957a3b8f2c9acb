use super::BridgeError;

pub const MAX_BITS: u32 = 31;

fn check(value: u32, bits: u32) -> Result<(), BridgeError> {
    if bits == 0 || bits > MAX_BITS {
        return Err(BridgeError::OutOfRange {
            field: "bits",
            value: u64::from(bits),
            limit: u64::from(MAX_BITS),
        });
    }
    if value >= 1 << bits {
        return Err(BridgeError::OutOfRange {
            field: "cell",
            value: u64::from(value),
            limit: (1u64 << bits) - 1,
        });
    }
    Ok(())
}

/// Reflected binary code of cell `n`.
pub fn gray_encode(n: u32, bits: u32) -> Result<u32, BridgeError> {
    check(n, bits)?;
    Ok(n ^ (n >> 1))
}

/// Inverse of [`gray_encode`] by prefix XOR.
pub fn gray_decode(code: u32, bits: u32) -> Result<u32, BridgeError> {
    check(code, bits)?;
    let mut n = code;
    let mut shift = 1;
    while shift < bits {
        n ^= n >> shift;
        shift <<= 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(gray_encode(0, 5).unwrap(), 0);
        assert_eq!(gray_encode(2, 4).unwrap(), 3);
        assert_eq!(gray_decode(3, 4).unwrap(), 2);
        assert_eq!(gray_encode(u32::MAX >> 1, 31).unwrap(), 1 << 30);
    }

    #[test]
    fn range_checked() {
        assert!(matches!(
            gray_encode(16, 4),
            Err(BridgeError::OutOfRange { field: "cell", .. })
        ));
        assert!(matches!(
            gray_decode(0, 0),
            Err(BridgeError::OutOfRange { field: "bits", .. })
        ));
        assert!(gray_encode(0, 32).is_err());
    }

    #[test]
    fn exhaustive_small_widths() {
        for bits in 1..=8 {
            for n in 0..(1u32 << bits) {
                let c = gray_encode(n, bits).unwrap();
                assert_eq!(gray_decode(c, bits).unwrap(), n);
                if n > 0 {
                    assert_eq!((c ^ gray_encode(n - 1, bits).unwrap()).count_ones(), 1);
                }
            }
        }
    }
}
