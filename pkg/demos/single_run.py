"""Run the desk benchmark once and print the per-round trajectory."""

from pathlib import Path

from leosplit import load_config, run_experiment

CFG = Path(__file__).resolve().parents[1] / "configs" / "desk.cfg"


def main() -> None:
    cfg = load_config(CFG)

    def show(rep):
        up, down = sum(rep.bytes_up), sum(rep.bytes_down)
        print(
            f"round {rep.round:2d}  t={rep.sim_time_s:8.0f}s  acc={rep.test_acc:.4f}  "
            f"server_loss={rep.server_loss:.4f}  down={down}B up={up}B"
        )

    run_experiment(cfg, on_round=show)


if __name__ == "__main__":
    main()
