use detirs::lnplus::{family_order, lnplus_poly, LnPolyOptions};
use detirs::rational::{int, to_f64};

#[test]
fn envelopes_dominate_and_decrease_with_level() {
    let opts = LnPolyOptions::default();
    for n_end in [4, 16] {
        let end = int(n_end);
        let g1 = lnplus_poly(1, &end, &opts).unwrap();
        let g2 = lnplus_poly(2, &end, &opts).unwrap();
        eprintln!("{}", g1.summary());
        eprintln!("{}", g2.summary());
        assert!(g1.certificate.passed() && g2.certificate.passed());
        let ord = family_order(&g1.g, &g2.g, 64);
        eprintln!("min g1-g2 {}", to_f64(&ord.min_difference));
        assert!(ord.holds());
    }
}
