use fracnorm::field::FieldFn;
use fracnorm::geometry::{DomainSpec, Exponents};
use fracnorm::kfunctional::{interp_seminorm, DomainModel, KMethod, ScaleGrid};

#[test]
fn slit_interp_stability() {
    let model = DomainModel::polygon(DomainSpec::slit_square());
    let e = Exponents::new(0.8, 1.5).unwrap();
    let f = FieldFn::slit_angle();
    let t0 = std::time::Instant::now();
    let p6 = interp_seminorm(&f, &e, &ScaleGrid::new(0.25, 0.5, 6).unwrap(), &model, KMethod::Opt).unwrap();
    println!("6 scales: value {} k_opt {:?} ({:?})", p6.interp_value, p6.k_opt, t0.elapsed());
    let t1 = std::time::Instant::now();
    let p8 = interp_seminorm(&f, &e, &ScaleGrid::new(0.25, 0.5, 8).unwrap(), &model, KMethod::Opt).unwrap();
    println!("8 scales: value {} ({:?})", p8.interp_value, t1.elapsed());
    println!("relative change {}", (p8.interp_value - p6.interp_value).abs() / p6.interp_value);
    println!("raw monotone: {} {}", p6.raw_monotone, p8.raw_monotone);
    println!("tail {} head6 {} head8 {}", p6.tail_bound, p6.head_gap, p8.head_gap);
}
