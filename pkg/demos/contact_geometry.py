"""Print orbital period and overhead-pass contact time for a few altitudes."""

from leosplit.orbit import contact_fraction, contact_seconds, orbital_period


def main() -> None:
    print(f"{'alt km':>7}{'period min':>12}{'pass s @25deg':>15}{'fraction':>10}")
    for alt in (400, 547, 800, 1200):
        print(
            f"{alt:>7}{orbital_period(alt) / 60:>12.2f}"
            f"{contact_seconds(alt, 25.0):>15.1f}{contact_fraction(alt, 25.0):>10.4f}"
        )


if __name__ == "__main__":
    main()
