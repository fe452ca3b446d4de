# --- run.py ---

# Import the factory function from the package directory
from rgbdt_segment import create_cli

# Create the command group using the factory
cli = create_cli()

# Usage: python run.py run --input <dir> --output <dir> [--config <file>]
if __name__ == '__main__':
    cli()
