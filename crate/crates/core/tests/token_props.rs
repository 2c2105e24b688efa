//! Passport, Visa and certificate properties.

use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use pvkit::crypto::{CryptoContext, KeyPair, StandardSuite, SymmetricKey, Timestamp};
use pvkit::tokens::{
    check_certificate, issue_certificate, make_passport, make_visa, open_passport, open_visa, CertRole, PassportBody,
    SealedPassport, SealedVisa, TokenError, VisaBody,
};

fn ctx(seed: u64) -> CryptoContext {
    CryptoContext::new(Arc::new(StandardSuite), seed)
}

fn keys(seed: u64, label: &str) -> KeyPair {
    ctx(seed).generate_keypair(label)
}

fn data() -> impl Strategy<Value = BTreeMap<String, String>> {
    prop::collection::btree_map("[a-z_]{1,12}", "\\PC{0,16}", 0..6)
}

fn passport() -> impl Strategy<Value = PassportBody> {
    (
        "\\PC{1,16}",
        any::<u64>(),
        1u64..u64::MAX / 2,
        data(),
        any::<[u8; 32]>(),
    )
        .prop_map(|(id_mu, pass_no, expiry, data, key)| PassportBody {
            id_mu,
            pass_no,
            expiry: Timestamp(expiry),
            data,
            master_key: SymmetricKey::from_bytes(key),
        })
}

fn visa() -> impl Strategy<Value = VisaBody> {
    (
        any::<u64>(),
        any::<u64>(),
        1u64..u64::MAX / 2,
        data(),
        any::<[u8; 32]>(),
    )
        .prop_map(|(pass_no, visa_no, expiry, data, key)| VisaBody {
            pass_no,
            visa_no,
            expiry: Timestamp(expiry),
            data,
            master_key: SymmetricKey::from_bytes(key),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn passport_round_trip_and_expiry(body in passport(), seed in any::<u64>()) {
        let hn = keys(seed, "hn");
        let mut c = ctx(seed);
        let sealed = make_passport(&mut c, &hn, &body).unwrap();
        prop_assert_eq!(&open_passport(&mut c, &hn, &sealed, body.expiry).unwrap(), &body);
        prop_assert_eq!(
            open_passport(&mut c, &hn, &sealed, Timestamp(body.expiry.0 + 1)),
            Err(TokenError::Expired)
        );
    }

    #[test]
    fn visa_round_trip_and_expiry(body in visa(), seed in any::<u64>()) {
        let fk = keys(seed, "fn");
        let mut c = ctx(seed);
        let sealed = make_visa(&mut c, &fk, &body).unwrap();
        prop_assert_eq!(&open_visa(&mut c, &fk, &sealed, Timestamp(0)).unwrap(), &body);
        prop_assert_eq!(open_visa(&mut c, &fk, &sealed, Timestamp(body.expiry.0 + 1)), Err(TokenError::Expired));
    }

    #[test]
    fn any_flipped_byte_is_rejected(body in passport(), pos in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let hn = keys(seed, "hn");
        let mut c = ctx(seed);
        let SealedPassport(mut bytes) = make_passport(&mut c, &hn, &body).unwrap();
        let p = pos.index(bytes.len());
        bytes[p] ^= 0x01;
        prop_assert!(open_passport(&mut c, &hn, &SealedPassport(bytes), Timestamp(0)).is_err());
    }

    #[test]
    fn tokens_only_open_for_their_issuer(body in visa(), seed in any::<u64>()) {
        let fk = keys(seed, "fn");
        let other = keys(seed.wrapping_add(1), "fn");
        let mut c = ctx(seed);
        let sealed = make_visa(&mut c, &fk, &body).unwrap();
        prop_assert!(open_visa(&mut c, &other, &sealed, Timestamp(0)).is_err());
        prop_assert!(open_visa(&mut c, &fk, &SealedVisa(Vec::new()), Timestamp(0)).is_err());
    }

    #[test]
    fn certificates_bind_subject_role_and_expiry(id in "[a-z0-9]{1,12}", expiry in 1u64..u64::MAX / 2, seed in any::<u64>()) {
        let ca = keys(seed, "ca");
        let subject = keys(seed.wrapping_add(7), "fn");
        let mut c = ctx(seed);
        let cert = issue_certificate(&mut c, &ca, &id, &subject.public_key, CertRole::NetworkProvider, Timestamp(expiry));
        prop_assert!(check_certificate(&mut c, &ca.public_key, &cert, CertRole::NetworkProvider, Timestamp(expiry)));
        prop_assert!(!check_certificate(&mut c, &ca.public_key, &cert, CertRole::IdentityProvider, Timestamp(0)));
        prop_assert!(!check_certificate(&mut c, &ca.public_key, &cert, CertRole::NetworkProvider, Timestamp(expiry + 1)));
        let mut renamed = cert.clone();
        renamed.subject_id.push('x');
        prop_assert!(!check_certificate(&mut c, &ca.public_key, &renamed, CertRole::NetworkProvider, Timestamp(0)));
        let mut rekeyed = cert;
        rekeyed.subject_public_key = keys(seed.wrapping_add(9), "fn").public_key;
        prop_assert!(!check_certificate(&mut c, &ca.public_key, &rekeyed, CertRole::NetworkProvider, Timestamp(0)));
    }
}
