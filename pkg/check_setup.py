# check_setup.py
import importlib.util
import os
import sys

REQUIRED_PACKAGES = ["numpy", "scipy", "PIL", "pandas", "langgraph", "colorama", "dotenv"]
OPTIONAL_VARIABLES = ["FPFORGE_WORKERS", "FPFORGE_QUALITY_CMD", "FPFORGE_LOG_FILE"]


def check_environment() -> bool:
    print("🔍 Vérification de l'environnement fpforge...\n")
    all_good = True

    version = sys.version_info
    if version >= (3, 10):
        print(f"✅ Python {version.major}.{version.minor}")
    else:
        print(f"❌ Python {version.major}.{version.minor} (3.10 minimum)")
        all_good = False

    for package in REQUIRED_PACKAGES:
        if importlib.util.find_spec(package) is None:
            print(f"❌ Paquet manquant : {package} (pip install -r requirements.txt)")
            all_good = False
        else:
            print(f"✅ {package}")

    if os.path.exists(".env"):
        with open(".env", "r", encoding="utf-8") as f:
            content = f.read()
        found = [name for name in OPTIONAL_VARIABLES if name in content]
        print(f"✅ Fichier .env détecté ({', '.join(found) or 'aucune variable fpforge'}).")
    else:
        print("ℹ️ Pas de fichier .env : valeurs par défaut (voir .env.example).")

    if not os.path.exists("logs"):
        os.makedirs("logs")
        print("✅ Dossier logs/ créé.")

    if all_good:
        print("\n🚀 Environnement prêt.")
    else:
        print("\n⚠️ Corrigez les erreurs avant de lancer fpforge.")
    return all_good


if __name__ == "__main__":
    sys.exit(0 if check_environment() else 1)
