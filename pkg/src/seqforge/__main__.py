from seqforge.cli import main

main()
