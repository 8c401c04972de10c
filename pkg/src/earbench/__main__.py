from earbench.cli import main

main()
