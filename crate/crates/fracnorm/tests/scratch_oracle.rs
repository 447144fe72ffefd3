use fracnorm::field::FieldFn;
use fracnorm::geometry::{DomainSpec, Exponents};
use fracnorm::meshing::triangulate;
use fracnorm::seminorms::{gagliardo_full, gagliardo_restricted, mc_oracle};

#[test]
fn print_reference_values() {
    let domain = DomainSpec::unit_square();
    let e = Exponents::new(0.5, 2.0).unwrap();
    let f = FieldFn::linear(1.0, 0.0, 0.0);
    let oracle = mc_oracle(&f, &e, &domain, false, 10_000_000, 2024).unwrap();
    println!("full oracle: {} +- {}", oracle.estimate, oracle.std_error);
    let oracle_r = mc_oracle(&f, &e, &domain, true, 10_000_000, 2024).unwrap();
    println!("restricted oracle: {} +- {}", oracle_r.estimate, oracle_r.std_error);
    let base = triangulate(&domain, 0.5).unwrap();
    for levels in [3usize, 4, 5] {
        let full = gagliardo_full(&f, &e, &domain, &base, levels);
        let restr = gagliardo_restricted(&f, &e, &domain, &base, levels);
        println!(
            "levels {levels}: full hist {:?} (value^p {}), restr hist {:?} (value^p {})",
            full.history,
            full.value.powi(2),
            restr.history,
            restr.value.powi(2)
        );
    }
}
