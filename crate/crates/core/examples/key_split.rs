//! Two users, one element: ciphertexts from one match trapdoors from the other.

use rand::thread_rng;
use sealed_rbac::crypto::{
    client_encrypt, client_trapdoor, init_with_group, keygen, match_element, server_reencrypt, server_trapdoor,
};
use sealed_rbac::group::GroupParams;
use sealed_rbac::ids::UserId;

fn main() {
    let mut rng = thread_rng();
    let (params, msk) = init_with_group(GroupParams::standard_2048(), &mut rng);
    let (alice, alice_s) = keygen(&msk, &UserId::new("alice"), &params, &mut rng);
    let (bob, bob_s) = keygen(&msk, &UserId::new("bob"), &params, &mut rng);
    println!("alice's halves recombine: {}", msk.is_split_by(&params, &alice, &alice_s));

    let ct = client_encrypt(&params, &alice, "role:Doctor", &mut rng).unwrap();
    let again = client_encrypt(&params, &alice, "role:Doctor", &mut rng).unwrap();
    println!("same element, fresh ciphertext: {}", ct.c1_hat != again.c1_hat);
    let stored = server_reencrypt(&params, &ct, &alice_s).unwrap();

    for query in ["role:Doctor", "role:Nurse"] {
        let td = client_trapdoor(&params, &bob, query, &mut rng).unwrap();
        let full = server_trapdoor(&params, &td, &bob_s).unwrap();
        println!("{query}: match = {}", match_element(&params, &stored, &full));
    }
}
