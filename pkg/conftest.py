# La racine du dépôt est ajoutée au sys.path par pytest : `main` et `src` sont importables.
