mod common;

use proptest::prelude::*;
use vsn_core::wirecodec::{decode_senml, encode_senml};
use vsn_core::{decode_message, encode_message};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn coap_messages_round_trip(m in common::message()) {
        let bytes = encode_message(&m).unwrap();
        prop_assert_eq!(decode_message(&bytes).unwrap(), m);
    }

    #[test]
    fn senml_batches_round_trip(b in common::batch()) {
        let bytes = encode_senml(&b).unwrap();
        prop_assert_eq!(decode_senml(&bytes).unwrap(), b);
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..80)) {
        let _ = decode_message(&bytes);
        let _ = decode_senml(&bytes);
    }

    #[test]
    fn reencoding_a_decoded_frame_is_stable(bytes in proptest::collection::vec(any::<u8>(), 4..40)) {
        if let Ok(m) = decode_message(&bytes) {
            let again = encode_message(&m).unwrap();
            prop_assert_eq!(decode_message(&again).unwrap(), m);
        }
    }
}
