import os

from dotenv import load_dotenv
from flask import Flask

from .logging_config import configure_logging

load_dotenv()


def create_app(runs_dir=None):
    from .utils.run_paths import runs_root

    # Configure logging early
    configure_logging()

    app = Flask(__name__)
    app.config['RUNS_DIR'] = str(runs_root(runs_dir))
    app.config['JSON_SORT_KEYS'] = True
    app.secret_key = os.environ.get("FLASK_SECRET_KEY", "default_secret_key")

    # Register blueprints
    from .routes.runs import bp as runs_bp

    app.register_blueprint(runs_bp)

    return app
