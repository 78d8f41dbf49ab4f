from dotenv import load_dotenv

from curricula import create_app
from curricula.cli import cli

load_dotenv()

app = create_app()

if __name__ == "__main__":
    cli()
