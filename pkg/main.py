from fairslot.cli import main as cli_main


def main():
    return cli_main()


if __name__ == "__main__":
    raise SystemExit(main())
