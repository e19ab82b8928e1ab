use biphoton::detection::ClickStream;
use biphoton::timestamps::{decode_bpht, decode_csv, encode_bpht, encode_csv, into_streams, read_timestamps, write_bpht};
use biphoton::Error;
use proptest::prelude::*;

fn streams_strategy() -> impl Strategy<Value = Vec<ClickStream>> {
    prop::collection::btree_map(0u8..8, prop::collection::vec(any::<u64>(), 0..60), 1..5).prop_map(|m| {
        m.into_iter()
            .map(|(ch, mut ts)| {
                ts.sort_unstable();
                ClickStream::new(ch, ts, u64::MAX).unwrap()
            })
            .collect()
    })
}

fn as_pairs(v: &[ClickStream]) -> Vec<(u8, Vec<u64>)> {
    v.iter().filter(|s| !s.is_empty()).map(|s| (s.channel, s.timestamps.clone())).collect()
}

proptest! {
    #[test]
    fn bpht_round_trip_is_lossless(streams in streams_strategy()) {
        let bytes = encode_bpht(&streams).unwrap();
        let total: usize = streams.iter().map(|s| s.len()).sum();
        prop_assert_eq!(bytes.len(), 6 + 9 * total);
        let back = into_streams(decode_bpht(&bytes).unwrap(), Some(u64::MAX)).unwrap();
        prop_assert_eq!(as_pairs(&back), as_pairs(&streams));
    }

    #[test]
    fn csv_round_trip_is_lossless(streams in streams_strategy()) {
        let text = encode_csv(&streams).unwrap();
        let back = into_streams(decode_csv(&text).unwrap(), Some(u64::MAX)).unwrap();
        prop_assert_eq!(as_pairs(&back), as_pairs(&streams));
    }

    #[test]
    fn truncation_names_the_partial_record(streams in streams_strategy(), cut in 1usize..9) {
        let bytes = encode_bpht(&streams).unwrap();
        prop_assume!(bytes.len() > 6);
        let len = bytes.len() - cut;
        match decode_bpht(&bytes[..len]) {
            Err(Error::Format { offset, .. }) => prop_assert_eq!(offset as usize, 6 + (len - 6) / 9 * 9),
            other => prop_assert!(false, "{:?}", other),
        }
    }
}

#[test]
fn file_round_trip_and_format_sniffing() {
    let dir = tempfile::tempdir().unwrap();
    let s = vec![
        ClickStream::new(0, vec![1, 5, 9_000_000], 10_000_000).unwrap(),
        ClickStream::new(1, vec![3, 3, 7], 10_000_000).unwrap(),
    ];
    let p = dir.path().join("t.bpht");
    write_bpht(&p, &s).unwrap();
    let back = read_timestamps(&p, Some(10_000_000)).unwrap();
    assert_eq!(as_pairs(&back), as_pairs(&s));
    let c = dir.path().join("t.csv");
    std::fs::write(&c, encode_csv(&s).unwrap()).unwrap();
    let back = read_timestamps(&c, None).unwrap();
    assert_eq!(as_pairs(&back), as_pairs(&s));
    assert_eq!(back[0].duration, 9_000_001);
}

#[test]
fn wrong_magic_and_version() {
    assert!(matches!(decode_bpht(b"XPHT\x01\x00"), Err(Error::Format { offset: 0, .. })));
    assert!(matches!(decode_bpht(b"BPHT\x02\x00"), Err(Error::Format { offset: 4, .. })));
    assert!(matches!(decode_bpht(b"BPHT\x01"), Err(Error::Format { offset: 4, .. })));
}
